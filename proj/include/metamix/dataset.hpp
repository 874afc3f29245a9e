#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamix/rng.hpp"

namespace metamix {

struct ClassRecord {
    std::uint64_t class_id = 0;
    std::vector<std::vector<double>> examples;  // each of length dim
};

// Class-structured dataset with disjoint train/val/test class splits.
struct ClassDataset {
    std::size_t dim = 0;
    std::vector<ClassRecord> classes;  // ordered by class_id
    std::vector<std::uint64_t> train_ids;
    std::vector<std::uint64_t> val_ids;
    std::vector<std::uint64_t> test_ids;

    const ClassRecord& class_by_id(std::uint64_t id) const {
        for (const auto& c : classes)
            if (c.class_id == id) return c;
        throw std::out_of_range("ClassDataset: no class with id " + std::to_string(id));
    }

    friend bool operator==(const ClassDataset& a, const ClassDataset& b) {
        if (a.dim != b.dim || a.train_ids != b.train_ids || a.val_ids != b.val_ids ||
            a.test_ids != b.test_ids || a.classes.size() != b.classes.size())
            return false;
        for (std::size_t i = 0; i < a.classes.size(); ++i) {
            if (a.classes[i].class_id != b.classes[i].class_id ||
                a.classes[i].examples != b.classes[i].examples)
                return false;
        }
        return true;
    }
};

// Floor-based 64/16/20 proportional split; the remainder goes to train.
struct SplitSizes {
    std::size_t train, val, test;
};

inline SplitSizes proportional_split(std::size_t num_classes) {
    SplitSizes s{};
    s.train = num_classes * 64 / 100;
    s.val = num_classes * 16 / 100;
    s.test = num_classes * 20 / 100;
    s.train += num_classes - (s.train + s.val + s.test);
    return s;
}

// Gaussian blobs: class mean uniform on [-1,1]^dim, examples mean + spread * N(0, I).
inline ClassDataset generate_synthetic(std::size_t num_classes, std::size_t per_class,
                                       std::size_t dim, double spread, std::uint64_t seed) {
    if (num_classes == 0) throw std::invalid_argument("generate_synthetic: num_classes must be positive");
    if (per_class == 0) throw std::invalid_argument("generate_synthetic: per_class must be positive");
    if (dim == 0) throw std::invalid_argument("generate_synthetic: dim must be positive");
    if (spread < 0.0) throw std::invalid_argument("generate_synthetic: spread must be nonnegative");

    RngEngine eng = make_engine(seed);
    ClassDataset ds;
    ds.dim = dim;
    ds.classes.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> mu(dim);
        for (auto& v : mu) v = uniform_real(eng, -1.0, 1.0);
        ClassRecord& rec = ds.classes[c];
        rec.class_id = c;
        rec.examples.resize(per_class);
        for (auto& ex : rec.examples) {
            ex.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) ex[j] = mu[j] + spread * normal(eng);
        }
    }

    const SplitSizes sizes = proportional_split(num_classes);
    std::uint64_t next = 0;
    for (std::size_t i = 0; i < sizes.train; ++i) ds.train_ids.push_back(next++);
    for (std::size_t i = 0; i < sizes.val; ++i) ds.val_ids.push_back(next++);
    for (std::size_t i = 0; i < sizes.test; ++i) ds.test_ids.push_back(next++);
    return ds;
}

// Keeps ceil(fraction * count) examples per training class, selected by a
// seeded shuffle (relative order preserved). Val/test classes untouched.
inline ClassDataset apply_fraction(const ClassDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("apply_fraction: fraction must be in (0,1], got " +
                                    std::to_string(fraction));
    }
    if (fraction == 1.0) return ds;

    ClassDataset out = ds;
    RngEngine eng = make_engine(seed);
    for (auto id : ds.train_ids) {
        for (auto& rec : out.classes) {
            if (rec.class_id != id) continue;
            const std::size_t n = rec.examples.size();
            const auto keep = static_cast<std::size_t>(
                std::ceil(fraction * static_cast<double>(n)));
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), eng);
            idx.resize(keep);
            std::sort(idx.begin(), idx.end());
            std::vector<std::vector<double>> kept;
            kept.reserve(keep);
            for (auto i : idx) kept.push_back(std::move(rec.examples[i]));
            rec.examples = std::move(kept);
            break;
        }
    }
    return out;
}

// ---- on-disk format --------------------------------------------------------
// magic | u64 dim | u64 num_classes | u64 x3 split sizes | split ids |
// per class: u64 class_id, u64 count, count*dim float64, all little-endian.

namespace detail {

constexpr char kDatasetMagic[8] = {'M', 'M', 'I', 'X', 'D', 'S', '0', '1'};

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace detail

inline void save_dataset(const ClassDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
    os.write(detail::kDatasetMagic, sizeof detail::kDatasetMagic);
    detail::write_u64(os, ds.dim);
    detail::write_u64(os, ds.classes.size());
    detail::write_u64(os, ds.train_ids.size());
    detail::write_u64(os, ds.val_ids.size());
    detail::write_u64(os, ds.test_ids.size());
    for (auto id : ds.train_ids) detail::write_u64(os, id);
    for (auto id : ds.val_ids) detail::write_u64(os, id);
    for (auto id : ds.test_ids) detail::write_u64(os, id);
    for (const auto& rec : ds.classes) {
        detail::write_u64(os, rec.class_id);
        detail::write_u64(os, rec.examples.size());
        for (const auto& ex : rec.examples) {
            os.write(reinterpret_cast<const char*>(ex.data()),
                     static_cast<std::streamsize>(ex.size() * sizeof(double)));
        }
    }
    if (!os) throw std::runtime_error("save_dataset: write to '" + path + "' failed");
}

inline ClassDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, detail::kDatasetMagic, sizeof magic) != 0) {
        throw std::runtime_error("load_dataset: '" + path + "' is not a dataset file");
    }
    ClassDataset ds;
    ds.dim = detail::read_u64(is);
    const std::uint64_t num_classes = detail::read_u64(is);
    const std::uint64_t n_train = detail::read_u64(is);
    const std::uint64_t n_val = detail::read_u64(is);
    const std::uint64_t n_test = detail::read_u64(is);
    for (std::uint64_t i = 0; i < n_train; ++i) ds.train_ids.push_back(detail::read_u64(is));
    for (std::uint64_t i = 0; i < n_val; ++i) ds.val_ids.push_back(detail::read_u64(is));
    for (std::uint64_t i = 0; i < n_test; ++i) ds.test_ids.push_back(detail::read_u64(is));
    ds.classes.resize(num_classes);
    for (auto& rec : ds.classes) {
        rec.class_id = detail::read_u64(is);
        const std::uint64_t count = detail::read_u64(is);
        rec.examples.assign(count, std::vector<double>(ds.dim));
        for (auto& ex : rec.examples) {
            is.read(reinterpret_cast<char*>(ex.data()),
                    static_cast<std::streamsize>(ds.dim * sizeof(double)));
        }
    }
    if (!is) throw std::runtime_error("load_dataset: '" + path + "' is truncated");
    return ds;
}

}  // namespace metamix
