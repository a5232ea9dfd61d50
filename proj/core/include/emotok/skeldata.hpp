#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "emotok/tensor.hpp"

namespace emotok::skeldata {

// One motion recording: frames is (T, J, 3) in meters.
struct SkeletonSequence {
    Tensor frames;
    std::size_t joint_count = 0;
    double fps = 0.0;
    std::string label;
    std::string dataset_id;
    std::string sample_id;

    std::size_t frame_count() const { return frames.rank() == 3 ? frames.dim(0) : 0; }
};

struct SampleEntry {
    std::string path;  // relative to the manifest's directory
    std::string label;
    std::size_t frames = 0;
};

struct DatasetManifest {
    std::string name;
    std::size_t joint_count = 0;
    double fps = 0.0;
    std::vector<std::string> labels;  // ordered, unique
    std::vector<SampleEntry> samples;

    bool has_label(const std::string& label) const;
    std::size_t label_index(const std::string& label) const;  // throws on unknown
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<SkeletonSequence> sequences;
};

// Manifest + sample file IO. Formats are fixed:
//   manifest:  "EMOTOK-MANIFEST v1", then "name ...", "joints J", "fps F",
//              "labels a b c", and one "sample <path> <label> <frames>" per entry.
//   sample:    header "T J fps label", then T lines of 3*J reals.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

SkeletonSequence load_sample(const std::filesystem::path& path, const std::string& dataset_id,
                             const std::string& sample_id);
void write_sample(const SkeletonSequence& seq, const std::filesystem::path& path);

// Loads and validates every sample named by the manifest.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

// 64-frame normalization: downsample by index selection floor(k*T/64), pad
// short sequences by cyclic repetition from the start.
SkeletonSequence resample_to_frames(const SkeletonSequence& seq, std::size_t target_frames = 64);

// Deterministic shuffled split; |train| = round(train_fraction * N).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(
    const DatasetManifest& manifest, const SplitSpec& spec);

struct SynthProfile {
    std::string name = "synthetic";
    std::size_t joint_count = 16;
    double fps = 60.0;
    std::vector<std::string> labels;
    std::size_t samples_per_label = 8;
    std::uint64_t seed = 0;
    std::size_t min_frames = 40;   // lengths cycle through [min,max] so both
    std::size_t max_frames = 96;   // padding and downsampling are exercised
};

// Deterministic per-label motion generators: each label gets a distinct
// frequency/amplitude signature so classes are separable in velocity space.
LoadedDataset synthesize_dataset(const SynthProfile& profile);

// Shape presets matching the corpora the pipeline targets.
SynthProfile emilya_like_profile(std::uint64_t seed);  // J=28, 8 labels, 120 Hz
SynthProfile kdae_like_profile(std::uint64_t seed);    // J=24, 7 labels, 125 Hz
SynthProfile egbm_like_profile(std::uint64_t seed);    // J=25, 7 labels, 30 Hz

// Writes manifest + sample files under dir; returns the manifest path.
std::filesystem::path write_dataset(const LoadedDataset& dataset,
                                    const std::filesystem::path& dir);

}  // namespace emotok::skeldata
