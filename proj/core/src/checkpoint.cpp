#include "emotok/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "emotok/errors.hpp"

namespace emotok {

namespace {
constexpr const char* kMagic = "EMOTOK-CKPT v1";

std::string hexfloat(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hexfloat(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw DataError("checkpoint: bad float literal '" + s + "'");
    return v;
}
}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out << kMagic << "\n";
    for (const auto& [k, v] : meta) {
        out << "meta " << k << " " << v << "\n";
    }
    for (const auto& [name, t] : tensors) {
        out << "tensor " << name << " " << t.rank();
        for (auto d : t.shape()) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.numel(); ++i) {
            out << hexfloat(t[i]) << (i + 1 == t.numel() ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw DataError("write failure: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw DataError("not an emotok checkpoint: " + path.string());
    }
    Checkpoint ckpt;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (kind == "tensor") {
            std::string name;
            std::size_t rank = 0;
            ls >> name >> rank;
            std::vector<std::size_t> shape(rank);
            for (auto& d : shape) {
                if (!(ls >> d)) throw DataError("checkpoint: truncated shape for " + name);
            }
            Tensor t(shape);
            std::string tok;
            if (t.numel() > 0) {
                if (!std::getline(in, line)) throw DataError("checkpoint: missing data for " + name);
                std::istringstream ds(line);
                for (std::size_t i = 0; i < t.numel(); ++i) {
                    if (!(ds >> tok)) throw DataError("checkpoint: truncated data for " + name);
                    t[i] = parse_hexfloat(tok);
                }
            }
            ckpt.tensors.emplace(name, std::move(t));
        } else {
            throw DataError("checkpoint: unknown record '" + kind + "'");
        }
    }
    return ckpt;
}

Checkpoint Checkpoint::from_store(const ParameterStore& params) {
    Checkpoint ckpt;
    for (const auto& [name, entry] : params.entries()) {
        ckpt.tensors.emplace(name, entry.value);
        ckpt.meta["trainable/" + name] = entry.trainable ? "1" : "0";
    }
    return ckpt;
}

void Checkpoint::restore_into(ParameterStore& params) const {
    for (const auto& [name, t] : tensors) {
        bool trainable = true;
        auto it = meta.find("trainable/" + name);
        if (it != meta.end()) trainable = it->second == "1";
        params.add(name, t, trainable);
    }
}

}  // namespace emotok
