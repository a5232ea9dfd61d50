#include "emotok/skeldata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "emotok/errors.hpp"

namespace emotok::skeldata {

namespace {
constexpr const char* kManifestMagic = "EMOTOK-MANIFEST v1";

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate_sequence(const SkeletonSequence& seq, const DatasetManifest& manifest) {
    if (seq.frames.rank() != 3 || seq.frames.dim(2) != 3) {
        throw DataError("sample " + seq.sample_id + ": frames must be (T,J,3)");
    }
    if (seq.joint_count != manifest.joint_count || seq.frames.dim(1) != manifest.joint_count) {
        throw DataError("sample " + seq.sample_id + ": joint count " +
                        std::to_string(seq.frames.dim(1)) + " does not match manifest joints " +
                        std::to_string(manifest.joint_count));
    }
    if (!manifest.has_label(seq.label)) {
        throw DataError("sample " + seq.sample_id + ": unknown label '" + seq.label + "'");
    }
    if (!seq.frames.all_finite()) {
        throw DataError("sample " + seq.sample_id + ": non-finite coordinate");
    }
}
}  // namespace

bool DatasetManifest::has_label(const std::string& label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::size_t DatasetManifest::label_index(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw ParameterError("unknown label: " + label);
    return static_cast<std::size_t>(it - labels.begin());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kManifestMagic) {
        throw DataError("not an emotok manifest: " + path.string());
    }
    DatasetManifest m;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "name") {
            ls >> m.name;
        } else if (key == "joints") {
            ls >> m.joint_count;
        } else if (key == "fps") {
            ls >> m.fps;
        } else if (key == "labels") {
            std::string label;
            while (ls >> label) m.labels.push_back(label);
        } else if (key == "sample") {
            SampleEntry e;
            if (!(ls >> e.path >> e.label >> e.frames)) {
                throw DataError("manifest " + path.string() + ": malformed sample line: " + line);
            }
            m.samples.push_back(std::move(e));
        } else {
            throw DataError("manifest " + path.string() + ": unknown key '" + key + "'");
        }
    }
    if (m.labels.empty()) throw DataError("manifest " + path.string() + ": no labels");
    std::set<std::string> unique(m.labels.begin(), m.labels.end());
    if (unique.size() != m.labels.size()) {
        throw DataError("manifest " + path.string() + ": duplicate labels");
    }
    if (m.joint_count == 0) throw DataError("manifest " + path.string() + ": joints missing");
    if (m.fps <= 0.0) throw DataError("manifest " + path.string() + ": fps missing");
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << kManifestMagic << "\n";
    out << "name " << manifest.name << "\n";
    out << "joints " << manifest.joint_count << "\n";
    out << "fps " << format_double(manifest.fps) << "\n";
    out << "labels";
    for (const auto& l : manifest.labels) out << " " << l;
    out << "\n";
    for (const auto& s : manifest.samples) {
        out << "sample " << s.path << " " << s.label << " " << s.frames << "\n";
    }
}

SkeletonSequence load_sample(const std::filesystem::path& path, const std::string& dataset_id,
                             const std::string& sample_id) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sample " + sample_id + ": " + path.string());
    std::size_t frames = 0, joints = 0;
    double fps = 0.0;
    std::string label;
    if (!(in >> frames >> joints >> fps >> label)) {
        throw DataError("sample " + sample_id + ": malformed header");
    }
    if (frames == 0) throw DataError("sample " + sample_id + ": empty sequence");
    if (joints == 0) throw DataError("sample " + sample_id + ": zero joints");
    SkeletonSequence seq;
    seq.frames = Tensor({frames, joints, 3});
    seq.joint_count = joints;
    seq.fps = fps;
    seq.label = label;
    seq.dataset_id = dataset_id;
    seq.sample_id = sample_id;
    for (std::size_t i = 0; i < seq.frames.numel(); ++i) {
        if (!(in >> seq.frames[i])) {
            throw DataError("sample " + sample_id + ": truncated frame data");
        }
    }
    return seq;
}

void write_sample(const SkeletonSequence& seq, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sample: " + path.string());
    const std::size_t T = seq.frames.dim(0), J = seq.frames.dim(1);
    out << T << " " << J << " " << format_double(seq.fps) << " " << seq.label << "\n";
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t k = 0; k < 3; ++k) {
                out << format_double(seq.frames.at3(t, j, k));
                out << ((j + 1 == J && k == 2) ? "" : " ");
            }
        }
        out << "\n";
    }
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    LoadedDataset ds;
    ds.manifest = load_manifest(manifest_path);
    if (ds.manifest.samples.empty()) {
        throw DataError("manifest " + manifest_path.string() + ": no samples");
    }
    const auto base = manifest_path.parent_path();
    for (const auto& entry : ds.manifest.samples) {
        auto seq = load_sample(base / entry.path, ds.manifest.name, entry.path);
        if (seq.label != entry.label) {
            throw DataError("sample " + entry.path + ": label '" + seq.label +
                            "' does not match manifest entry '" + entry.label + "'");
        }
        if (seq.frame_count() != entry.frames) {
            throw DataError("sample " + entry.path + ": frame count " +
                            std::to_string(seq.frame_count()) + " does not match manifest entry " +
                            std::to_string(entry.frames));
        }
        validate_sequence(seq, ds.manifest);
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

SkeletonSequence resample_to_frames(const SkeletonSequence& seq, std::size_t target_frames) {
    const std::size_t T = seq.frame_count();
    if (T == 0) throw DataError("resample: empty sequence " + seq.sample_id);
    if (target_frames == 0) throw ParameterError("resample: target must be positive");
    if (T == target_frames) return seq;
    const std::size_t J = seq.frames.dim(1);
    SkeletonSequence out = seq;
    out.frames = Tensor({target_frames, J, 3});
    for (std::size_t k = 0; k < target_frames; ++k) {
        // T > target: uniform index selection; T < target: cyclic repetition.
        const std::size_t src = T > target_frames ? (k * T) / target_frames : k % T;
        std::copy(seq.frames.data() + src * J * 3, seq.frames.data() + (src + 1) * J * 3,
                  out.frames.data() + k * J * 3);
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(
    const DatasetManifest& manifest, const SplitSpec& spec) {
    const std::size_t n = manifest.samples.size();
    if (n < 5) throw ParameterError("split: need at least 5 samples, got " + std::to_string(n));
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0) {
        throw ParameterError("split: train_fraction must be in (0,1)");
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    // Hand-rolled Fisher-Yates: std::shuffle's draw sequence is not pinned by
    // the standard, and the partition must be reproducible across platforms.
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    const auto train_count =
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    std::vector<std::size_t> train(idx.begin(), idx.begin() + train_count);
    std::vector<std::size_t> test(idx.begin() + train_count, idx.end());
    return {std::move(train), std::move(test)};
}

LoadedDataset synthesize_dataset(const SynthProfile& profile) {
    if (profile.joint_count < 2) throw ParameterError("synth: need at least 2 joints");
    if (profile.labels.empty()) throw ParameterError("synth: labels must be nonempty");
    if (profile.min_frames == 0 || profile.max_frames < profile.min_frames) {
        throw ParameterError("synth: bad frame range");
    }
    LoadedDataset ds;
    ds.manifest.name = profile.name;
    ds.manifest.joint_count = profile.joint_count;
    ds.manifest.fps = profile.fps;
    ds.manifest.labels = profile.labels;

    std::mt19937_64 rng(profile.seed);
    const std::size_t J = profile.joint_count;

    // Fixed rest pose: a rough vertical chain with small lateral offsets.
    std::vector<double> rest(J * 3);
    for (std::size_t j = 0; j < J; ++j) {
        rest[j * 3 + 0] = 0.1 * std::sin(0.9 * static_cast<double>(j));
        rest[j * 3 + 1] = 0.08 * static_cast<double>(j);
        rest[j * 3 + 2] = 0.1 * std::cos(1.3 * static_cast<double>(j));
    }

    const std::size_t span = profile.max_frames - profile.min_frames + 1;
    std::size_t counter = 0;
    for (std::size_t li = 0; li < profile.labels.size(); ++li) {
        const std::string& label = profile.labels[li];
        // Per-label motion signature: distinct frequency/amplitude pairs
        // separate the classes in velocity space, and a per-label postural
        // lean separates them in mean position (as slumped-vs-upright does
        // for real emotional motion).
        const double freq = 0.4 + 0.55 * static_cast<double>(li);
        const double amp = 0.04 + 0.035 * static_cast<double>(li);
        const double lean = 0.25 * static_cast<double>(li + 1) /
                            static_cast<double>(profile.labels.size());
        const double lean_dir = li % 2 == 0 ? 1.0 : -1.0;
        for (std::size_t s = 0; s < profile.samples_per_label; ++s) {
            const std::size_t frames = profile.min_frames + (counter * 7) % span;
            SkeletonSequence seq;
            seq.joint_count = J;
            seq.fps = profile.fps;
            seq.label = label;
            seq.dataset_id = profile.name;
            seq.sample_id = profile.name + "_" + label + "_" + std::to_string(s);
            seq.frames = Tensor({frames, J, 3});
            std::uniform_real_distribution<double> jitter(-0.005, 0.005);
            const double phase_shift = 0.25 * static_cast<double>(s);
            for (std::size_t t = 0; t < frames; ++t) {
                const double time = static_cast<double>(t) / profile.fps;
                for (std::size_t j = 0; j < J; ++j) {
                    const double phase = 0.6 * static_cast<double>(j) + phase_shift;
                    const double wave = std::sin(2.0 * std::numbers::pi * freq * time + phase);
                    const double sway = std::cos(2.0 * std::numbers::pi * freq * time + phase);
                    const double chain = static_cast<double>(j) / static_cast<double>(J - 1);
                    seq.frames.at3(t, j, 0) =
                        rest[j * 3 + 0] + lean_dir * lean * chain + amp * wave + jitter(rng);
                    seq.frames.at3(t, j, 1) =
                        rest[j * 3 + 1] - 0.3 * lean * chain + 0.5 * amp * sway + jitter(rng);
                    seq.frames.at3(t, j, 2) =
                        rest[j * 3 + 2] + 0.5 * lean * chain * lean_dir + amp * sway +
                        jitter(rng);
                }
            }
            SampleEntry entry;
            entry.path = seq.sample_id + ".txt";
            entry.label = label;
            entry.frames = frames;
            ds.manifest.samples.push_back(entry);
            ds.sequences.push_back(std::move(seq));
            ++counter;
        }
    }
    return ds;
}

SynthProfile emilya_like_profile(std::uint64_t seed) {
    SynthProfile p;
    p.name = "emilya-like";
    p.joint_count = 28;
    p.fps = 120.0;
    p.labels = {"Neutral", "Joy", "Anger", "Panic", "Fear", "Anxiety", "Sadness", "Shame"};
    p.seed = seed;
    return p;
}

SynthProfile kdae_like_profile(std::uint64_t seed) {
    SynthProfile p;
    p.name = "kdae-like";
    p.joint_count = 24;
    p.fps = 125.0;
    p.labels = {"Happiness", "Sadness", "Neutral", "Anger", "Disgust", "Fear", "Surprise"};
    p.seed = seed;
    return p;
}

SynthProfile egbm_like_profile(std::uint64_t seed) {
    SynthProfile p;
    p.name = "egbm-like";
    p.joint_count = 25;
    p.fps = 30.0;
    p.labels = {"Happiness", "Sadness", "Neutral", "Anger", "Disgust", "Fear", "Surprise"};
    p.seed = seed;
    return p;
}

std::filesystem::path write_dataset(const LoadedDataset& dataset,
                                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
        write_sample(dataset.sequences[i], dir / dataset.manifest.samples[i].path);
    }
    const auto manifest_path = dir / "manifest.txt";
    write_manifest(dataset.manifest, manifest_path);
    return manifest_path;
}

}  // namespace emotok::skeldata
