#include "lindistill/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/rng.hpp"

namespace lindistill {

namespace {

constexpr std::string_view kDataMagic = "LDDATA01";
constexpr std::uint32_t kDataVersion = 1;
constexpr std::size_t kAsciiVocab = 128;

std::uint64_t split_stream(Split split) { return 0xDA7A0000ULL + static_cast<std::uint64_t>(split); }

Dataset empty_split(const TaskSpec& spec, Split split, std::size_t count) {
    Dataset d;
    d.kind = spec.kind;
    d.split = split;
    d.vocab = spec.model_vocab();
    d.seq_len = spec.seq_len;
    d.num_classes = spec.num_classes();
    d.seed = spec.seed;
    d.count = count;
    d.tokens.resize(count * spec.seq_len);
    d.lengths.assign(count, static_cast<std::int32_t>(spec.seq_len));
    d.labels.resize(count * d.labels_per_example());
    return d;
}

Dataset make_majority(const TaskSpec& spec, Split split, std::size_t count) {
    Dataset d = empty_split(spec, split, count);
    Rng rng(spec.seed, split_stream(split));
    const std::size_t n = spec.seq_len;
    for (std::size_t j = 0; j < count; ++j) {
        auto* seq = d.tokens.data() + j * n;
        const std::int32_t label = static_cast<std::int32_t>(j % 2);
        for (std::size_t t = 0; t < n; ++t) seq[t] = static_cast<std::int32_t>(rng.below(spec.vocab));
        const std::span<const std::int32_t> view(seq, n);
        if (majority_label(view) == -1) {
            auto* pos = std::find_if(seq, seq + n, [&](std::int32_t t) { return t != label; });
            if (pos != seq + n) *pos = label;
        }
        if (majority_label(view) != label) {
            for (std::size_t t = 0; t < n; ++t) {
                if (seq[t] == 0 || seq[t] == 1) seq[t] = 1 - seq[t];
            }
        }
        d.labels[j] = label;
    }
    return d;
}

Dataset make_first_last(const TaskSpec& spec, Split split, std::size_t count) {
    Dataset d = empty_split(spec, split, count);
    Rng rng(spec.seed, split_stream(split));
    const std::size_t n = spec.seq_len;
    for (std::size_t j = 0; j < count; ++j) {
        auto* seq = d.tokens.data() + j * n;
        for (std::size_t t = 0; t < n; ++t) seq[t] = static_cast<std::int32_t>(rng.below(spec.vocab));
        const bool match = j % 2 == 1;
        if (match) {
            seq[n - 1] = seq[0];
        } else if (seq[n - 1] == seq[0]) {
            seq[n - 1] = static_cast<std::int32_t>((seq[0] + 1 + rng.below(spec.vocab - 1)) % spec.vocab);
        }
        d.labels[j] = match ? 1 : 0;
    }
    return d;
}

std::string load_ascii(const std::filesystem::path& path) {
    std::string text = io::read_file(path.string());
    for (unsigned char c : text) {
        if (c >= kAsciiVocab) throw FormatError("'" + path.string() + "' is not ASCII text");
    }
    return text;
}

Dataset make_char_lm(const TaskSpec& spec, const std::string& text, Split split, std::size_t count) {
    Dataset d = empty_split(spec, split, count);
    const std::size_t total = text.size();
    const std::size_t cut1 = total * 8 / 10, cut2 = total * 9 / 10;
    const std::size_t lo = split == Split::train ? 0 : split == Split::val ? cut1 : cut2;
    const std::size_t hi = split == Split::train ? cut1 : split == Split::val ? cut2 : total;
    const std::size_t window = spec.seq_len + 1;
    if (hi - lo < window) {
        throw ConfigError("text too short: the " + to_string(split) + " region holds fewer than " +
                          std::to_string(window) + " characters");
    }
    Rng rng(spec.seed, split_stream(split));
    const std::size_t n = spec.seq_len;
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t start = lo + rng.below(hi - lo - window + 1);
        for (std::size_t t = 0; t < n; ++t) {
            d.tokens[j * n + t] = static_cast<unsigned char>(text[start + t]);
            d.labels[j * n + t] = static_cast<unsigned char>(text[start + t + 1]);
        }
    }
    return d;
}

}  // namespace

std::int32_t majority_label(std::span<const std::int32_t> tokens) {
    const auto zeros = std::count(tokens.begin(), tokens.end(), 0);
    const auto ones = std::count(tokens.begin(), tokens.end(), 1);
    return zeros == ones ? -1 : zeros > ones ? 0 : 1;
}

std::int32_t first_last_label(std::span<const std::int32_t> tokens) {
    return tokens.front() == tokens.back() ? 1 : 0;
}

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::majority: return "majority";
        case TaskKind::first_last_match: return "first-last-match";
        case TaskKind::char_lm: return "char-lm";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& text) {
    if (text == "majority") return TaskKind::majority;
    if (text == "first-last-match") return TaskKind::first_last_match;
    if (text == "char-lm") return TaskKind::char_lm;
    throw ConfigError("unknown task kind '" + text + "'");
}

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::size_t TaskSpec::num_classes() const { return kind == TaskKind::char_lm ? model_vocab() : 2; }

std::size_t TaskSpec::model_vocab() const { return kind == TaskKind::char_lm ? kAsciiVocab : vocab; }

void TaskSpec::validate() const {
    if (seq_len < 2) throw ConfigError("task seq_len must be at least 2");
    if (kind != TaskKind::char_lm && vocab < 2) throw ConfigError("task vocab must be at least 2");
    if (train_size == 0) throw ConfigError("task train_size must be positive");
    if (kind == TaskKind::char_lm && text_path.empty()) throw ConfigError("char-lm needs task.text_path");
}

DatasetSplits generate(const TaskSpec& spec) {
    spec.validate();
    DatasetSplits out;
    const std::pair<Split, std::size_t> parts[] = {
        {Split::train, spec.train_size}, {Split::val, spec.val_size}, {Split::test, spec.test_size}};
    std::string text;
    if (spec.kind == TaskKind::char_lm) text = load_ascii(spec.text_path);
    for (auto [split, count] : parts) {
        Dataset d;
        switch (spec.kind) {
            case TaskKind::majority: d = make_majority(spec, split, count); break;
            case TaskKind::first_last_match: d = make_first_last(spec, split, count); break;
            case TaskKind::char_lm: d = make_char_lm(spec, text, split, count); break;
        }
        (split == Split::train ? out.train : split == Split::val ? out.val : out.test) = std::move(d);
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    io::Writer w;
    w.bytes(kDataMagic);
    w.u32(kDataVersion);
    w.u32(static_cast<std::uint32_t>(d.kind));
    w.u32(static_cast<std::uint32_t>(d.split));
    w.u32(static_cast<std::uint32_t>(d.vocab));
    w.u32(static_cast<std::uint32_t>(d.seq_len));
    w.u32(static_cast<std::uint32_t>(d.num_classes));
    w.u32(static_cast<std::uint32_t>(d.count));
    w.u32(static_cast<std::uint32_t>(d.labels_per_example()));
    w.u64(d.seed);
    for (auto t : d.tokens) w.i32(t);
    for (auto l : d.lengths) w.i32(l);
    for (auto l : d.labels) w.i32(l);
    io::write_file_atomic(path.string(), w.data());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path.string());
    io::Reader r(bytes);
    if (r.remaining() < kDataMagic.size() || r.bytes(kDataMagic.size()) != kDataMagic) {
        throw FormatError("'" + path.string() + "' is not a dataset file");
    }
    if (r.u32() != kDataVersion) throw FormatError("unknown dataset version in '" + path.string() + "'");
    Dataset d;
    const auto kind = r.u32();
    if (kind > 2) throw FormatError("unknown task kind in dataset");
    d.kind = static_cast<TaskKind>(kind);
    const auto split = r.u32();
    if (split > 2) throw FormatError("unknown split in dataset");
    d.split = static_cast<Split>(split);
    d.vocab = r.u32();
    d.seq_len = r.u32();
    d.num_classes = r.u32();
    d.count = r.u32();
    const std::size_t lpe = r.u32();
    d.seed = r.u64();
    if (lpe != d.labels_per_example()) throw FormatError("dataset label layout does not match its kind");
    const std::size_t need = 4 * (d.count * d.seq_len + d.count + d.count * lpe);
    if (r.remaining() != need) throw FormatError("dataset body size mismatch in '" + path.string() + "'");
    d.tokens.resize(d.count * d.seq_len);
    for (auto& t : d.tokens) t = r.i32();
    d.lengths.resize(d.count);
    for (auto& l : d.lengths) l = r.i32();
    d.labels.resize(d.count * lpe);
    for (auto& l : d.labels) l = r.i32();
    return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    Batch b;
    b.size = indices.size();
    b.time = data.seq_len;
    const std::size_t lpe = data.labels_per_example();
    b.tokens.reserve(b.size * b.time);
    b.labels.reserve(b.size * lpe);
    for (std::size_t i : indices) {
        if (i >= data.count) throw std::out_of_range("example index beyond dataset");
        auto ex = data.example(i);
        b.tokens.insert(b.tokens.end(), ex.begin(), ex.end());
        b.lengths.push_back(data.lengths[i]);
        b.labels.insert(b.labels.end(), data.labels.begin() + static_cast<std::ptrdiff_t>(i * lpe),
                        data.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * lpe));
    }
    return b;
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
    if (size_ == 0 || batch_size_ == 0) throw ConfigError("batch sampler needs data and a positive batch size");
}

std::vector<std::size_t> BatchSampler::indices(std::int64_t step) const {
    if (step < 1) throw std::invalid_argument("steps are 1-based");
    std::vector<std::size_t> out;
    out.reserve(batch_size_);
    // Position of this batch in the concatenated stream of epoch permutations.
    std::uint64_t pos = static_cast<std::uint64_t>(step - 1) * batch_size_;
    std::uint64_t cached_epoch = UINT64_MAX;
    std::vector<std::size_t> perm;
    while (out.size() < batch_size_) {
        const std::uint64_t epoch = pos / size_;
        if (epoch != cached_epoch) {
            perm.resize(size_);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(seed_, 0xE90C0000ULL + epoch);
            for (std::size_t i = size_; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            cached_epoch = epoch;
        }
        out.push_back(perm[pos % size_]);
        ++pos;
    }
    return out;
}

Metrics evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
    NoGradGuard no_grad;
    Metrics m;
    double total_loss = 0.0;
    std::size_t correct = 0, targets = 0;
    const std::size_t classes = model.spec().output_dim();
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.count; start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.count, start + batch_size); ++i) idx.push_back(i);
        const Batch batch = make_batch(data, idx);
        const HiddenTrace out = forward_with_trace(model, batch);
        auto logits = out.logits.values();
        const std::size_t rows = logits.size() / classes;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::int32_t label = batch.labels[r];
            if (data.kind == TaskKind::char_lm) {
                const std::size_t t = r % batch.time;
                if (label < 0 || t >= static_cast<std::size_t>(batch.lengths[r / batch.time])) continue;
            }
            const double* row = logits.data() + r * classes;
            const double mx = *std::max_element(row, row + classes);
            double z = 0.0;
            for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
            total_loss += std::log(z) + mx - row[label];
            correct += static_cast<std::size_t>(std::max_element(row, row + classes) - row) ==
                       static_cast<std::size_t>(label);
            ++targets;
        }
    }
    m.count = targets;
    if (targets > 0) {
        m.accuracy = static_cast<double>(correct) / static_cast<double>(targets);
        m.loss = total_loss / static_cast<double>(targets);
        m.perplexity = std::exp(m.loss);
    }
    return m;
}

}  // namespace lindistill
