#include "emotok/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "emotok/errors.hpp"

namespace emotok::evalkit {

namespace {
constexpr const char* kLexiconMagic = "EMOTOK-LEXICON v1";

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}
}  // namespace

LabelLexicon LabelLexicon::defaults() {
    LabelLexicon lex;
    auto entry = [](std::string canonical, std::string surface,
                    std::vector<std::string> extra) {
        Entry e;
        e.canonical = std::move(canonical);
        e.surface = std::move(surface);
        e.forms.push_back(lowercase(e.canonical));
        if (lowercase(e.surface) != e.forms.front()) e.forms.push_back(lowercase(e.surface));
        for (auto& f : extra) e.forms.push_back(lowercase(f));
        return e;
    };
    lex.add(entry("Neutral", "neutral", {"neutrality", "neutrally", "calm"}));
    lex.add(entry("Happiness", "happy", {"happily", "joy", "joyful", "joyfully"}));
    lex.add(entry("Anger", "angry", {"angrily", "furious", "rage"}));
    lex.add(entry("Panic", "panicked", {"panicking", "panicky"}));
    lex.add(entry("Fear", "fearful", {"fearfully", "afraid", "scared", "frightened"}));
    lex.add(entry("Anxiety", "anxious", {"anxiously"}));
    lex.add(entry("Sadness", "sad", {"sadly", "sorrow", "sorrowful"}));
    lex.add(entry("Shame", "ashamed", {"shameful", "shamefully"}));
    lex.add(entry("Disgust", "disgusted", {"disgusting"}));
    lex.add(entry("Surprise", "surprised", {"surprising", "astonished"}));
    return lex;
}

void LabelLexicon::add(Entry entry) {
    if (entry.canonical.empty()) throw ParameterError("lexicon: empty canonical label");
    if (entries_.count(entry.canonical)) {
        throw ParameterError("lexicon: duplicate canonical label " + entry.canonical);
    }
    for (const auto& form : entry.forms) {
        auto it = form_map_.find(form);
        if (it != form_map_.end() && it->second != entry.canonical) {
            throw ParameterError("lexicon: form '" + form + "' already belongs to " + it->second);
        }
    }
    for (const auto& form : entry.forms) form_map_[form] = entry.canonical;
    canonicals_.push_back(entry.canonical);
    entries_.emplace(entry.canonical, std::move(entry));
}

bool LabelLexicon::has_canonical(const std::string& label) const {
    return entries_.count(label) != 0;
}

std::optional<std::string> LabelLexicon::canonical_of(const std::string& form) const {
    auto it = form_map_.find(lowercase(form));
    if (it == form_map_.end()) return std::nullopt;
    return it->second;
}

const std::string& LabelLexicon::surface_of(const std::string& canonical) const {
    auto it = entries_.find(canonical);
    if (it == entries_.end()) throw ParameterError("lexicon: unknown label " + canonical);
    return it->second.surface;
}

const std::vector<std::string>& LabelLexicon::forms_of(const std::string& canonical) const {
    auto it = entries_.find(canonical);
    if (it == entries_.end()) throw ParameterError("lexicon: unknown label " + canonical);
    return it->second.forms;
}

bool LabelLexicon::same_label(const std::string& a, const std::string& b) const {
    auto ca = canonical_of(a);
    auto cb = canonical_of(b);
    if (ca && cb) return *ca == *cb;
    return lowercase(a) == lowercase(b);
}

LabelLexicon LabelLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kLexiconMagic) {
        throw DataError("not an emotok lexicon: " + path.string());
    }
    LabelLexicon lex;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key, canonical, surface_key, surface, forms_key;
        ls >> key >> canonical >> surface_key >> surface >> forms_key;
        if (key != "label" || surface_key != "surface" || forms_key != "forms") {
            throw DataError("lexicon " + path.string() + ": malformed line: " + line);
        }
        Entry e;
        e.canonical = canonical;
        e.surface = surface;
        std::string form;
        while (ls >> form) e.forms.push_back(lowercase(form));
        if (e.forms.empty()) throw DataError("lexicon: label " + canonical + " has no forms");
        lex.add(std::move(e));
    }
    if (lex.canonicals().empty()) throw DataError("lexicon " + path.string() + ": empty");
    return lex;
}

void LabelLexicon::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write lexicon: " + path.string());
    out << kLexiconMagic << "\n";
    for (const auto& canonical : canonicals_) {
        const Entry& e = entries_.at(canonical);
        out << "label " << e.canonical << " surface " << e.surface << " forms";
        for (const auto& f : e.forms) out << " " << f;
        out << "\n";
    }
}

std::vector<std::string> tokenize_text(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '\'') {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::string extract_label(const std::string& text, const LabelLexicon& lexicon) {
    if (lexicon.canonicals().empty()) throw ParameterError("extract_label: empty lexicon");
    std::set<std::string> found;
    for (const auto& token : tokenize_text(text)) {
        if (auto canonical = lexicon.canonical_of(token)) found.insert(*canonical);
    }
    if (found.size() == 1) return *found.begin();
    return kErrorLabel;
}

double accuracy(std::span<const GenerationRecord> records, const LabelLexicon& lexicon) {
    if (records.empty()) throw ParameterError("accuracy: no records");
    std::size_t correct = 0;
    for (const auto& r : records) {
        if (r.extracted == kErrorLabel) continue;
        if (lexicon.same_label(r.extracted, r.reference_label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

namespace {
double f1(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::size_t clipped_overlap(const std::vector<std::string>& cand,
                            const std::vector<std::string>& ref) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : ref) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : cand) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}
}  // namespace

RougeScores rouge(const std::string& candidate, const std::string& reference) {
    const auto cand = tokenize_text(candidate);
    const auto ref = tokenize_text(reference);
    if (ref.empty()) throw ParameterError("rouge: metric undefined for empty reference");
    RougeScores scores;
    if (cand.empty()) return scores;
    const auto overlap = static_cast<double>(clipped_overlap(cand, ref));
    scores.rouge1_f = f1(overlap / static_cast<double>(cand.size()),
                         overlap / static_cast<double>(ref.size()));
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    scores.rougeL_f = f1(lcs / static_cast<double>(cand.size()),
                         lcs / static_cast<double>(ref.size()));
    return scores;
}

double bleu(const std::string& candidate, const std::string& reference, std::size_t max_n) {
    if (max_n == 0) throw ParameterError("bleu: max_n must be positive");
    const auto cand = tokenize_text(candidate);
    const auto ref = tokenize_text(reference);
    if (ref.empty()) throw ParameterError("bleu: metric undefined for empty reference");
    if (cand.empty()) return 0.0;  // by convention

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        std::map<std::vector<std::string>, std::size_t> ref_ngrams;
        for (std::size_t i = 0; i + n <= ref.size(); ++i) {
            ++ref_ngrams[{ref.begin() + i, ref.begin() + i + n}];
        }
        std::size_t total = cand.size() >= n ? cand.size() - n + 1 : 0;
        std::size_t matched = 0;
        std::map<std::vector<std::string>, std::size_t> used;
        for (std::size_t i = 0; i + n <= cand.size(); ++i) {
            std::vector<std::string> gram(cand.begin() + i, cand.begin() + i + n);
            auto it = ref_ngrams.find(gram);
            if (it != ref_ngrams.end() && used[gram] < it->second) {
                ++used[gram];
                ++matched;
            }
        }
        // add-one smoothing whenever the raw count is zero
        double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                               : (1.0) / static_cast<double>(total + 1);
        log_sum += std::log(p);
    }
    double bp = 1.0;
    if (cand.size() < ref.size()) {
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
    }
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double meteor_simplified(const std::string& candidate, const std::string& reference,
                         const LabelLexicon& lexicon) {
    const auto cand = tokenize_text(candidate);
    const auto ref = tokenize_text(reference);
    if (ref.empty()) throw ParameterError("meteor: metric undefined for empty reference");
    if (cand.empty()) return 0.0;

    // alignment[i] = index into ref matched by cand[i], or npos
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> alignment(cand.size(), npos);
    std::vector<bool> ref_used(ref.size(), false);

    auto align_stage = [&](auto&& matcher) {
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (alignment[i] != npos) continue;
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (ref_used[j]) continue;
                if (matcher(cand[i], ref[j])) {
                    alignment[i] = j;
                    ref_used[j] = true;
                    break;
                }
            }
        }
    };
    // exact, then grammatical form, then synonym; the lexicon resolves the
    // latter two to canonical-label identity
    align_stage([](const std::string& a, const std::string& b) { return a == b; });
    align_stage([&](const std::string& a, const std::string& b) {
        auto ca = lexicon.canonical_of(a);
        auto cb = lexicon.canonical_of(b);
        return ca && cb && *ca == *cb;
    });

    std::size_t matches = 0;
    for (auto a : alignment) {
        if (a != npos) ++matches;
    }
    if (matches == 0) return 0.0;

    const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);

    // chunks: maximal runs of adjacent candidate tokens aligned to adjacent
    // reference tokens, in order
    std::size_t chunks = 0;
    std::size_t prev_ref = npos;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (alignment[i] == npos) {
            prev_ref = npos;
            continue;
        }
        if (prev_ref == npos || alignment[i] != prev_ref + 1) ++chunks;
        prev_ref = alignment[i];
    }
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    return f_mean * (1.0 - penalty);
}

OutputFormat parse_output_format(const std::string& name) {
    if (name == "A" || name == "a") return OutputFormat::A;
    if (name == "B" || name == "b") return OutputFormat::B;
    if (name == "C" || name == "c") return OutputFormat::C;
    throw ParameterError("unknown output format: " + name);
}

std::string format_name(OutputFormat format) {
    switch (format) {
        case OutputFormat::A: return "A";
        case OutputFormat::B: return "B";
        case OutputFormat::C: return "C";
    }
    throw ParameterError("unknown output format");
}

std::string render_output_format(OutputFormat format, const std::string& label) {
    if (label.empty()) throw ParameterError("render_output_format: empty label");
    switch (format) {
        case OutputFormat::A:
            return label;
        case OutputFormat::B: {
            const char first = static_cast<char>(std::tolower(static_cast<unsigned char>(label[0])));
            const bool vowel = first == 'a' || first == 'e' || first == 'i' || first == 'o' ||
                               first == 'u';
            return std::string("This is ") + (vowel ? "an " : "a ") + label + " person.";
        }
        case OutputFormat::C:
            return "This is a 3D skeleton sequence of a person. From their movements, it can be "
                   "observed that their emotion is " +
                   label + ".";
    }
    throw ParameterError("unknown output format");
}

}  // namespace emotok::evalkit
