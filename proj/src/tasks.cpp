#include "datf/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "datf/rng.hpp"

namespace datf {

namespace {

int draw_token(rng::Engine& eng, int vocab) {
    return rng::uniform_int(eng, kFirstContentTokenId, vocab - 1);
}

// Uniform over [2, vocab) excluding up to two forbidden values.
int draw_token_excluding(rng::Engine& eng, int vocab, int avoid_a, int avoid_b = -1) {
    for (;;) {
        const int t = draw_token(eng, vocab);
        if (t != avoid_a && t != avoid_b) return t;
    }
}

void check_task_args(const char* op, int n_examples, int seq_len, int min_seq_len, int vocab) {
    if (n_examples < 1) throw std::invalid_argument(std::string(op) + ": n_examples must be >= 1");
    if (seq_len < min_seq_len) {
        throw std::invalid_argument(std::string(op) + ": seq_len must be >= " +
                                    std::to_string(min_seq_len));
    }
    if (vocab < 8) throw std::invalid_argument(std::string(op) + ": vocab must be >= 8");
}

// Interleave labels so any prefix is balanced too.
std::vector<int> balanced_labels(int n_examples) {
    std::vector<int> labels(static_cast<std::size_t>(n_examples));
    for (int i = 0; i < n_examples; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
    return labels;
}

}  // namespace

Dataset gen_local_task(std::uint64_t seed, int n_examples, int seq_len, int vocab) {
    check_task_args("gen_local_task", n_examples, seq_len, 3, vocab);
    rng::Engine eng = rng::derive(seed, 0x10c41);

    Dataset data;
    data.vocab = vocab;
    data.classes = 2;
    data.examples.reserve(static_cast<std::size_t>(n_examples));
    for (int label : balanced_labels(n_examples)) {
        Example ex;
        ex.label = label;
        ex.tokens.resize(static_cast<std::size_t>(seq_len));
        // Base sequence with no adjacent duplicates.
        ex.tokens[0] = draw_token(eng, vocab);
        for (int i = 1; i < seq_len; ++i) {
            ex.tokens[static_cast<std::size_t>(i)] =
                draw_token_excluding(eng, vocab, ex.tokens[static_cast<std::size_t>(i - 1)]);
        }
        if (label == 1) {
            // Force one adjacent duplicate at a random position.
            const int p = rng::uniform_int(eng, 0, seq_len - 2);
            ex.tokens[static_cast<std::size_t>(p + 1)] = ex.tokens[static_cast<std::size_t>(p)];
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

Dataset gen_longrange_task(std::uint64_t seed, int n_examples, int seq_len, int vocab) {
    check_task_args("gen_longrange_task", n_examples, seq_len, 8, vocab);
    rng::Engine eng = rng::derive(seed, 0x7093);

    Dataset data;
    data.vocab = vocab;
    data.classes = 2;
    data.examples.reserve(static_cast<std::size_t>(n_examples));
    for (int label : balanced_labels(n_examples)) {
        Example ex;
        ex.label = label;
        ex.tokens.resize(static_cast<std::size_t>(seq_len));
        auto& t = ex.tokens;
        const int last = seq_len - 1;
        t[0] = draw_token(eng, vocab);
        // Middle noise: no token equals its neighbours, so there are no
        // adjacent duplicates anywhere and local statistics carry no label.
        for (int i = 1; i < last; ++i) {
            t[static_cast<std::size_t>(i)] =
                draw_token_excluding(eng, vocab, t[static_cast<std::size_t>(i - 1)]);
        }
        if (label == 1) {
            t[static_cast<std::size_t>(last)] = t[0];
            if (t[static_cast<std::size_t>(last - 1)] == t[0]) {
                t[static_cast<std::size_t>(last - 1)] = draw_token_excluding(
                    eng, vocab, t[static_cast<std::size_t>(last - 2)], t[0]);
            }
        } else {
            t[static_cast<std::size_t>(last)] = draw_token_excluding(
                eng, vocab, t[0], t[static_cast<std::size_t>(last - 1)]);
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

Dataset load_tsv(const std::string& path, const std::string& vocab_path, int max_len) {
    if (max_len < 1) throw std::invalid_argument("load_tsv: max_len must be >= 1");

    std::ifstream vocab_file(vocab_path);
    if (!vocab_file) throw std::runtime_error("load_tsv: cannot open vocab file " + vocab_path);
    std::unordered_map<std::string, int> vocab;
    std::string line;
    int next_id = 0;
    while (std::getline(vocab_file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        vocab.emplace(line, next_id++);
    }
    if (next_id < 2) {
        throw std::runtime_error("load_tsv: vocab must have at least 2 entries (PAD, OOV)");
    }

    std::ifstream file(path);
    if (!file) throw std::runtime_error("load_tsv: cannot open " + path);

    Dataset data;
    data.vocab = next_id;
    int max_label = -1;
    int line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("load_tsv: " + path + ":" + std::to_string(line_no) +
                                     ": no tab separator");
        }
        const std::string label_str = line.substr(0, tab);
        int label = -1;
        try {
            std::size_t consumed = 0;
            label = std::stoi(label_str, &consumed);
            if (consumed != label_str.size()) label = -1;
        } catch (const std::exception&) {
            label = -1;
        }
        if (label < 0) {
            throw std::runtime_error("load_tsv: " + path + ":" + std::to_string(line_no) +
                                     ": unknown label '" + label_str + "'");
        }

        Example ex;
        ex.label = label;
        std::istringstream words(line.substr(tab + 1));
        std::string word;
        while (static_cast<int>(ex.tokens.size()) < max_len && words >> word) {
            const auto it = vocab.find(word);
            ex.tokens.push_back(it != vocab.end() ? it->second : kOovTokenId);
        }
        if (ex.tokens.empty()) {
            throw std::runtime_error("load_tsv: " + path + ":" + std::to_string(line_no) +
                                     ": empty token sequence");
        }
        max_label = std::max(max_label, label);
        data.examples.push_back(std::move(ex));
    }
    data.classes = max_label + 1;
    return data;
}

std::array<Dataset, 3> split_dataset(const Dataset& data, std::array<double, 3> fractions,
                                     std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw std::invalid_argument("split_dataset: fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-9) throw std::invalid_argument("split_dataset: fractions sum > 1");

    const std::size_t n = data.examples.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng::Engine eng = rng::derive(seed, 0x59717);
    rng::shuffle(order, eng);

    std::array<std::size_t, 3> sizes{};
    for (int s = 0; s < 3; ++s) {
        sizes[static_cast<std::size_t>(s)] =
            static_cast<std::size_t>(std::llround(fractions[static_cast<std::size_t>(s)] * n));
    }
    if (total > 1.0 - 1e-9) {
        // Fractions sum to 1: last split absorbs rounding so the union is exact.
        const std::size_t used = sizes[0] + sizes[1];
        sizes[2] = n > used ? n - used : 0;
    }
    std::size_t begin = 0;
    std::array<Dataset, 3> out;
    const char* tags[3] = {"train", "dev", "test"};
    for (int s = 0; s < 3; ++s) {
        Dataset& part = out[static_cast<std::size_t>(s)];
        part.vocab = data.vocab;
        part.classes = data.classes;
        part.split = tags[s];
        const std::size_t end = std::min(n, begin + sizes[static_cast<std::size_t>(s)]);
        for (std::size_t i = begin; i < end; ++i) part.examples.push_back(data.examples[order[i]]);
        begin = end;
    }
    return out;
}

}  // namespace datf
