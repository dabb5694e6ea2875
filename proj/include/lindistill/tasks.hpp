#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lindistill/batch.hpp"
#include "lindistill/model.hpp"

namespace lindistill {

enum class TaskKind : std::uint32_t { majority = 0, first_last_match = 1, char_lm = 2 };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

struct TaskSpec {
    TaskKind kind = TaskKind::first_last_match;
    std::size_t vocab = 8;
    std::size_t seq_len = 128;
    std::size_t train_size = 4000;
    std::size_t val_size = 1000;
    std::size_t test_size = 1000;
    std::uint64_t seed = 1;
    std::filesystem::path text_path;  // char-lm only

    std::size_t num_classes() const;
    // Vocabulary the model sees (128 for char-lm, `vocab` otherwise).
    std::size_t model_vocab() const;
    void validate() const;
};

enum class Split : std::uint32_t { train = 0, val = 1, test = 2 };

std::string to_string(Split split);

struct Dataset {
    TaskKind kind = TaskKind::first_last_match;
    Split split = Split::train;
    std::size_t vocab = 0;
    std::size_t seq_len = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    std::vector<std::int32_t> tokens;   // count * seq_len
    std::vector<std::int32_t> lengths;  // count
    std::vector<std::int32_t> labels;   // count, or count * seq_len for char-lm

    std::size_t labels_per_example() const { return kind == TaskKind::char_lm ? seq_len : 1; }
    std::span<const std::int32_t> example(std::size_t i) const {
        return std::span<const std::int32_t>(tokens).subspan(i * seq_len, seq_len);
    }

    bool operator==(const Dataset&) const = default;
};

struct DatasetSplits {
    Dataset train, val, test;
};

// 0 or 1 for the more frequent content token, -1 on a tie.
std::int32_t majority_label(std::span<const std::int32_t> tokens);
// 1 when the first and last tokens agree.
std::int32_t first_last_label(std::span<const std::int32_t> tokens);

// Deterministic: each split draws from its own RNG stream of spec.seed.
//  majority          tokens 0 and 1 are the content tokens; label is the
//                    more frequent one (ties are broken in favor of the label).
//  first-last-match  label = [first token == last token]; labels alternate,
//                    and the last token is rewritten to match or differ.
//  char-lm           windows of seq_len + 1 characters from the text; train,
//                    val and test sample from the first 80%, next 10% and
//                    last 10% of the file.
DatasetSplits generate(const TaskSpec& spec);

// Flat little-endian file: 8-byte magic, header (kind, split, vocab,
// seq_len, num_classes, count, labels per example, seed), then int32
// tokens, lengths and labels.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

// Deterministic batch order: epochs are independent permutations keyed by
// (seed, epoch), so the batch for any step can be rebuilt without replay.
class BatchSampler {
public:
    BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);
    // step is 1-based.
    std::vector<std::size_t> indices(std::int64_t step) const;
    std::size_t batch_size() const { return batch_size_; }

private:
    std::size_t size_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

struct Metrics {
    double accuracy = 0.0;  // classification accuracy or next-token accuracy
    double loss = 0.0;      // mean cross-entropy
    double perplexity = 0.0;
    std::size_t count = 0;
};

Metrics evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 64);

}  // namespace lindistill
