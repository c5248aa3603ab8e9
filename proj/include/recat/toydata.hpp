#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recat/grid.hpp"

namespace recat {

/// One synthetic try-on sample living directly in latent space.
struct ToyScene {
    LatentGrid person_full;    // ground truth: body with the garment worn
    LatentGrid person_masked;  // person_full with the garment area zeroed
    LatentGrid garment;        // flat-lay render of the garment
    RegionMask mask;           // 1 inside the garment area on the person
    std::uint32_t garment_id = 0;
    std::uint32_t body_id = 0;

    friend bool operator==(const ToyScene&, const ToyScene&) = default;
};

/// A person paired with someone else's garment; no ground truth exists.
struct UnpairedSample {
    ToyScene person;
    LatentGrid garment;
    std::uint32_t garment_id = 0;

    friend bool operator==(const UnpairedSample&, const UnpairedSample&) = default;
};

struct DatasetSplit {
    std::vector<ToyScene> train;
    std::vector<ToyScene> test_paired;
    std::vector<UnpairedSample> test_unpaired;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct ToyDataParams {
    std::size_t channels = 4;
    std::size_t height = 32;
    std::size_t width = 24;
    std::uint32_t n_patterns = 6;
};

/// Scene fully determined by its ids.
ToyScene make_scene(std::uint32_t body_id, std::uint32_t garment_id, const ToyDataParams& p);
/// Scene with ids derived from `seed`.
ToyScene gen_scene(std::uint64_t seed, std::size_t C, std::size_t H, std::size_t W,
                   std::uint32_t n_patterns);

LatentGrid render_garment(std::uint32_t garment_id, const ToyDataParams& p);

/// The generator's own body-dependent warp of a garment render into the
/// mask; an oracle that knows body_id reproduces person_full exactly.
LatentGrid reconstruct_person(const LatentGrid& person_masked, const LatentGrid& garment,
                              std::uint32_t body_id, const ToyDataParams& p);

/// Half of `n_test` paired, half unpaired; test bodies never appear in train.
DatasetSplit gen_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                         const ToyDataParams& p);

ToyDataParams infer_params(const DatasetSplit& split, std::uint32_t n_patterns);

// "RCDS" file: u32 version, u32 pattern count, then three sections (train,
// paired, unpaired), each a u64 count followed by length-prefixed grid
// records and u32 ids.
std::string encode_dataset(const DatasetSplit& split, std::uint32_t n_patterns);
DatasetSplit decode_dataset(const std::string& bytes, std::uint32_t* n_patterns = nullptr);
void save_dataset(const DatasetSplit& split, std::uint32_t n_patterns, const std::string& path);
DatasetSplit load_dataset(const std::string& path, std::uint32_t* n_patterns = nullptr);

}  // namespace recat
