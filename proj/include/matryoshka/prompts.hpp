#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "matryoshka/core.hpp"

namespace matryoshka {

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PromptRole { answer, verify, summary, judge };

std::string_view to_string(PromptRole role);

/// A prompt template with `{{name}}` placeholders, validated against its role when parsed.
///
/// Allowed placeholders per role:
///   answer  -> question (required)
///   verify  -> question, solution (both required)
///   summary -> question, candidates (both required)
///   judge   -> question, answer, reference (answer and reference required)
class PromptTemplate {
public:
    static PromptTemplate parse(PromptRole role, std::string id, std::string_view text);

    PromptRole role() const { return role_; }
    const std::string& id() const { return id_; }
    const std::string& text() const { return text_; }

    /// Replaces every placeholder; `values` must cover all names used by the template.
    std::string substitute(std::span<const std::pair<std::string_view, std::string_view>> values) const;

private:
    struct Segment {
        bool placeholder = false;
        std::string content;
    };

    PromptTemplate() = default;

    PromptRole role_ = PromptRole::answer;
    std::string id_;
    std::string text_;
    std::vector<Segment> segments_;
};

/// Context-length controls for candidates embedded in verify and summary prompts.
struct CandidateRendering {
    std::size_t per_candidate_chars = 4000;
    std::size_t max_candidates = 32;
    bool include_full_reasoning = true;

    void validate() const;
};

/// A rendered prompt plus its provenance. `subject_texts` holds the full text of every
/// candidate the prompt presents (verify: one, summary: the serialized pool, judge: the
/// predicted answer); simulated backends read it, remote backends ignore it.
struct RenderedPrompt {
    std::string text;
    std::string template_id;
    std::vector<std::string> subject_texts;
};

struct TemplateSet {
    PromptTemplate answer;
    PromptTemplate verify;
    PromptTemplate summary;
    PromptTemplate judge;

    static TemplateSet defaults();

    /// Loads `<directory>/<name>.txt` for each role. Trailing whitespace of each file is dropped.
    static TemplateSet load(const std::filesystem::path& directory, const std::string& answer_name,
                            const std::string& verify_name, const std::string& summary_name,
                            const std::string& judge_name);
};

/// Built-in template bodies, identical to the files shipped under templates/.
std::string_view default_template_text(PromptRole role);

RenderedPrompt render_answer(const PromptTemplate& tpl, const Query& query);

RenderedPrompt render_verify(const PromptTemplate& tpl, const Query& query, const Candidate& candidate,
                             const CandidateRendering& rendering = {});

/// Serializes `pool` in (loop, sample) order, keeping the `max_candidates` most recent.
/// An empty pool is a contract violation unless `allow_empty` is set.
RenderedPrompt render_summary(const PromptTemplate& tpl, const Query& query, const CandidateSet& pool,
                              const CandidateRendering& rendering, bool allow_empty = false);

RenderedPrompt render_judge(const PromptTemplate& tpl, const Query& query, std::string_view predicted);

/// Last `budget` bytes of `text` (UTF-8 safe), prefixed with "[...] " when cut.
std::string tail_excerpt(std::string_view text, std::size_t budget);

}  // namespace matryoshka
