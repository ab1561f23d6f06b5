#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace datf {

// Token ids 0 and 1 are reserved (PAD and OOV); synthetic generators only
// emit ids >= 2.
inline constexpr int kPadTokenId = 0;
inline constexpr int kOovTokenId = 1;
inline constexpr int kFirstContentTokenId = 2;

struct Example {
    std::vector<int> tokens;
    int label = 0;
};

struct Dataset {
    std::vector<Example> examples;
    int vocab = 0;
    int classes = 0;
    std::string split;  // train/dev/test tag

    std::size_t size() const { return examples.size(); }
};

// Binary task: label 1 iff some adjacent token pair is equal. Classes are
// balanced to within one example; deterministic per seed.
Dataset gen_local_task(std::uint64_t seed, int n_examples, int seq_len, int vocab);

// Binary task: label 1 iff first token == last token. Middle tokens never
// equal their neighbours and are independent of the label, so only the
// first/last pair carries signal.
Dataset gen_longrange_task(std::uint64_t seed, int n_examples, int seq_len, int vocab);

// TSV: "<label>\t<space-tokenized text>". Vocab file: one token per line,
// line number = id (line 0 should be the PAD token, line 1 the OOV token).
// Unknown words map to OOV id 1; sequences are truncated to max_len.
Dataset load_tsv(const std::string& path, const std::string& vocab_path, int max_len);

// Seed-deterministic shuffled partition. If the fractions sum to 1 the last
// split takes every remaining example, so the union is the input multiset.
std::array<Dataset, 3> split_dataset(const Dataset& data, std::array<double, 3> fractions,
                                     std::uint64_t seed);

}  // namespace datf
