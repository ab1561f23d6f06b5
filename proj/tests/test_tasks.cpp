#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "datf/tasks.hpp"

using namespace datf;

namespace {

// Independent label predicates (kept separate from the generators on purpose).
bool has_adjacent_duplicate(const std::vector<int>& tokens) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (tokens[i] == tokens[i - 1]) return true;
    }
    return false;
}

bool first_equals_last(const std::vector<int>& tokens) {
    return tokens.front() == tokens.back();
}

std::filesystem::path temp_file(const char* name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("gen_local_task labels match the defining predicate") {
    const Dataset data = gen_local_task(101, 2000, 12, 16);
    CHECK(data.classes == 2);
    int positives = 0;
    for (const Example& ex : data.examples) {
        CHECK(static_cast<int>(ex.tokens.size()) == 12);
        CHECK(ex.label == (has_adjacent_duplicate(ex.tokens) ? 1 : 0));
        positives += ex.label;
        for (int t : ex.tokens) {
            CHECK(t >= kFirstContentTokenId);
            CHECK(t < 16);
        }
    }
    CHECK(positives == 1000);  // balanced by construction
}

TEST_CASE("gen_local_task is pure in its arguments") {
    const Dataset a = gen_local_task(7, 50, 8, 10);
    const Dataset b = gen_local_task(7, 50, 8, 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.examples[i].tokens == b.examples[i].tokens);
        CHECK(a.examples[i].label == b.examples[i].label);
    }
    const Dataset c = gen_local_task(8, 50, 8, 10);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.examples[i].tokens != c.examples[i].tokens) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("gen_local_task argument validation") {
    CHECK_THROWS_AS(gen_local_task(1, 10, 2, 16), std::invalid_argument);
    CHECK_THROWS_AS(gen_local_task(1, 10, 8, 4), std::invalid_argument);
    CHECK_THROWS_AS(gen_local_task(1, 0, 8, 16), std::invalid_argument);
}

TEST_CASE("gen_longrange_task structure") {
    const Dataset data = gen_longrange_task(211, 3000, 16, 16);
    int positives = 0;
    for (const Example& ex : data.examples) {
        CHECK(ex.label == (first_equals_last(ex.tokens) ? 1 : 0));
        // No adjacent duplicates anywhere: local statistics are silent.
        CHECK(!has_adjacent_duplicate(ex.tokens));
        positives += ex.label;
    }
    CHECK(positives == 1500);
    CHECK_THROWS_AS(gen_longrange_task(1, 10, 7, 16), std::invalid_argument);
}

TEST_CASE("middle tokens alone cannot beat 55 percent on the longrange task") {
    // Presence-based naive Bayes over tokens 2..n-1, trained on half the data.
    const int vocab = 16;
    const Dataset data = gen_longrange_task(331, 10000, 16, vocab);
    const std::size_t half = data.size() / 2;

    std::vector<std::vector<double>> present_count(2, std::vector<double>(vocab, 1.0));
    std::vector<double> class_count(2, 2.0);
    auto middle_presence = [&](const Example& ex) {
        std::vector<bool> present(vocab, false);
        for (std::size_t i = 1; i + 1 < ex.tokens.size(); ++i)
            present[static_cast<std::size_t>(ex.tokens[i])] = true;
        return present;
    };
    for (std::size_t i = 0; i < half; ++i) {
        const Example& ex = data.examples[i];
        const auto present = middle_presence(ex);
        class_count[static_cast<std::size_t>(ex.label)] += 1.0;
        for (int t = 0; t < vocab; ++t) {
            if (present[static_cast<std::size_t>(t)])
                present_count[static_cast<std::size_t>(ex.label)][static_cast<std::size_t>(t)] += 1.0;
        }
    }
    std::size_t correct = 0;
    for (std::size_t i = half; i < data.size(); ++i) {
        const Example& ex = data.examples[i];
        const auto present = middle_presence(ex);
        double score[2] = {0.0, 0.0};
        for (int c = 0; c < 2; ++c) {
            for (int t = 0; t < vocab; ++t) {
                const double p = present_count[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] /
                                 class_count[static_cast<std::size_t>(c)];
                score[c] += present[static_cast<std::size_t>(t)] ? std::log(p) : std::log1p(-p);
            }
        }
        const int predicted = score[1] > score[0] ? 1 : 0;
        if (predicted == ex.label) ++correct;
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(data.size() - half);
    CHECK(accuracy <= 0.55);
}

TEST_CASE("split_dataset") {
    Dataset data;
    data.vocab = 10;
    data.classes = 2;
    for (int i = 0; i < 1000; ++i) data.examples.push_back({{2, 3, static_cast<int>(2 + i % 8)}, i % 2});

    const auto parts = split_dataset(data, {0.8, 0.1, 0.1}, 5);
    CHECK(parts[0].size() == 800);
    CHECK(parts[1].size() == 100);
    CHECK(parts[2].size() == 100);
    CHECK(parts[0].split == "train");
    CHECK(parts[2].split == "test");

    const auto again = split_dataset(data, {0.8, 0.1, 0.1}, 5);
    for (int s = 0; s < 3; ++s) {
        REQUIRE(parts[static_cast<std::size_t>(s)].size() == again[static_cast<std::size_t>(s)].size());
        for (std::size_t i = 0; i < parts[static_cast<std::size_t>(s)].size(); ++i) {
            CHECK(parts[static_cast<std::size_t>(s)].examples[i].tokens ==
                  again[static_cast<std::size_t>(s)].examples[i].tokens);
        }
    }

    // Union is the original multiset when fractions sum to 1.
    std::multiset<std::vector<int>> original, recombined;
    for (const Example& ex : data.examples) original.insert(ex.tokens);
    for (const auto& part : parts)
        for (const Example& ex : part.examples) recombined.insert(ex.tokens);
    CHECK(original == recombined);

    CHECK_THROWS_AS(split_dataset(data, {0.8, 0.3, 0.1}, 5), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(data, {0.8, 0.0, 0.1}, 5), std::invalid_argument);
}

TEST_CASE("load_tsv") {
    const auto vocab_path =
        temp_file("datf_vocab.txt", "<pad>\n<oov>\nhello\nworld\nagain\n");
    const auto data_path = temp_file("datf_data.tsv", "1\thello world\n0\thello unknown\n");

    const Dataset data = load_tsv(data_path.string(), vocab_path.string(), 8);
    REQUIRE(data.size() == 2);
    CHECK(data.vocab == 5);
    CHECK(data.classes == 2);
    CHECK(data.examples[0].tokens == std::vector<int>{2, 3});
    CHECK(data.examples[0].label == 1);
    CHECK(data.examples[1].tokens == std::vector<int>{2, kOovTokenId});

    // Truncation to max_len.
    const auto long_path = temp_file("datf_long.tsv", "0\thello world again hello world\n");
    CHECK(load_tsv(long_path.string(), vocab_path.string(), 3).examples[0].tokens.size() == 3);

    // Malformed rows name the line.
    const auto no_tab = temp_file("datf_notab.tsv", "1\thello\nbroken line\n");
    CHECK_THROWS_WITH_AS(load_tsv(no_tab.string(), vocab_path.string(), 8),
                         doctest::Contains(":2"), std::runtime_error);
    const auto bad_label = temp_file("datf_badlabel.tsv", "x\thello\n");
    CHECK_THROWS_WITH_AS(load_tsv(bad_label.string(), vocab_path.string(), 8),
                         doctest::Contains("label"), std::runtime_error);

    for (const auto& p : {vocab_path, data_path, long_path, no_tab, bad_label})
        std::filesystem::remove(p);
}
