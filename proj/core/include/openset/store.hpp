#pragma once

#include <optional>
#include <string>
#include <vector>

#include "openset/common.hpp"

namespace openset {

enum class Split { Labeled, Unlabeled, Validation, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct EmbeddingRecord {
    std::string id;
    Split split = Split::Unlabeled;
    std::optional<int> label;
    Vec vector;
    std::optional<bool> ood_truth;
    std::optional<std::string> group_id;
};

// Immutable after load/build; shared dimension across all records.
struct Store {
    std::vector<EmbeddingRecord> records;
    std::size_t dim = 0;

    std::vector<std::size_t> indices_of(Split s) const;
    const EmbeddingRecord* find(const std::string& id) const;
};

// Validates invariants: uniform dimension, finite vectors, unique ids,
// label presence matching split. Stray labels on unlabeled records are
// dropped with a warning appended to `warnings`.
Store validate_store(std::vector<EmbeddingRecord> records, std::vector<std::string>* warnings = nullptr);

enum class StoreFormat { Jsonl, Csv };

StoreFormat format_from_name(const std::string& name);

Store load_store(const std::string& path, StoreFormat format, std::vector<std::string>* warnings = nullptr);
void save_store(const Store& store, const std::string& path, StoreFormat format);

struct SyntheticSpec {
    std::size_t n_labeled = 25;
    std::size_t n_unlabeled_inlier = 2000;
    std::size_t n_ood = 3000;
    std::size_t n_val = 200;
    std::size_t n_test = 400;
    std::size_t n_classes = 4;
    std::size_t n_ood_components = 3;
    std::size_t raw_dim = 32;
    double class_separation = 6.0;
    double ood_offset = 10.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Isotropic Gaussian blobs: inlier class means pairwise >= class_separation
// apart, OOD component means >= ood_offset from every inlier mean.
// Labeled/val/test splits are inlier-only; the unlabeled split mixes inliers
// and OODs with ood_truth set. Pure function of the spec.
Store generate_synthetic_openset(const SyntheticSpec& spec);

// Generating means, exposed so tests can build nearest-mean oracles.
struct SyntheticGroundTruth {
    std::vector<Vec> class_means;
    std::vector<Vec> ood_means;
};
SyntheticGroundTruth synthetic_ground_truth(const SyntheticSpec& spec);

}  // namespace openset
