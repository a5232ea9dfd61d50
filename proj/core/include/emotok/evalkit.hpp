#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emotok::evalkit {

inline constexpr const char* kErrorLabel = "Error";

// Canonical emotion labels with their accepted surface forms (synonyms and
// grammatical variants). Every form maps to exactly one canonical label.
class LabelLexicon {
public:
    struct Entry {
        std::string canonical;
        std::string surface;             // preferred form for templated sentences
        std::vector<std::string> forms;  // lowercase, includes canonical + surface
    };

    // Ships the 10 canonical labels covered by the target corpora.
    static LabelLexicon defaults();

    static LabelLexicon load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void add(Entry entry);  // throws on a form already claimed by another label

    const std::vector<std::string>& canonicals() const { return canonicals_; }
    bool has_canonical(const std::string& label) const;

    // Canonical label for any known form (case-insensitive), nullopt otherwise.
    std::optional<std::string> canonical_of(const std::string& form) const;

    // Preferred surface form for sentence templates.
    const std::string& surface_of(const std::string& canonical) const;
    const std::vector<std::string>& forms_of(const std::string& canonical) const;

    // True when both resolve to the same canonical label.
    bool same_label(const std::string& a, const std::string& b) const;

private:
    std::vector<std::string> canonicals_;
    std::map<std::string, Entry> entries_;        // canonical -> entry
    std::map<std::string, std::string> form_map_;  // lowercase form -> canonical
};

// Lowercase word tokenization with punctuation split off.
std::vector<std::string> tokenize_text(const std::string& text);

// The recognition rule: exactly one distinct canonical label present in the
// text -> that label; zero or several -> "Error".
std::string extract_label(const std::string& text, const LabelLexicon& lexicon);

struct GenerationRecord {
    std::string sample_id;
    std::string task;  // "recognition" | "description"
    std::string generated;
    std::string extracted;  // canonical label or "Error"
    std::string reference_label;
    std::string reference_description;
    std::map<std::string, double> scores;
};

// correct / total; "Error" counts as incorrect; references are canonicalized
// through the lexicon (synonyms and grammatical forms count as success).
double accuracy(std::span<const GenerationRecord> records, const LabelLexicon& lexicon);

struct RougeScores {
    double rouge1_f = 0.0;
    double rougeL_f = 0.0;
};

RougeScores rouge(const std::string& candidate, const std::string& reference);

// Geometric mean of modified n-gram precisions (n<=4, add-one smoothing on
// zero counts) times the brevity penalty.
double bleu(const std::string& candidate, const std::string& reference, std::size_t max_n = 4);

// Unigram alignment by exact, then form, then synonym match; F_mean =
// 10PR/(R+9P), chunk penalty 0.5*(chunks/matches)^3.
double meteor_simplified(const std::string& candidate, const std::string& reference,
                         const LabelLexicon& lexicon);

enum class OutputFormat { A, B, C };

OutputFormat parse_output_format(const std::string& name);  // "A"|"B"|"C"
std::string format_name(OutputFormat format);

// Byte-exact supervision templates; format B picks "a"/"an" by the
// vowel-initial rule.
std::string render_output_format(OutputFormat format, const std::string& label);

}  // namespace emotok::evalkit
