#include "matryoshka/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace matryoshka {

namespace {

constexpr std::string_view kBoxedInstruction = "\n\nPut your final answer within \\boxed{}.";
constexpr std::string_view kVerdictInstruction =
    "\n\nEnd your response with a final line that reads exactly `FINAL VERDICT: CORRECT` or "
    "`FINAL VERDICT: INCORRECT`.";

constexpr std::string_view kDefaultAnswer =
    "Solve the following problem. Reason carefully, step by step.\n"
    "\n"
    "Problem:\n"
    "{{question}}";

constexpr std::string_view kDefaultVerify =
    "You are checking a proposed solution to a problem. Independently re-derive the answer and check "
    "every step of the proposed solution. Do not accept a claim in the solution without checking it "
    "yourself.\n"
    "\n"
    "Problem:\n"
    "{{question}}\n"
    "\n"
    "Proposed solution:\n"
    "{{solution}}";

constexpr std::string_view kDefaultSummary =
    "You are given a problem together with candidate solutions that were produced independently. "
    "Some of them may be wrong and none is guaranteed to be correct. Compare their reasoning, find "
    "and correct any errors, and reconcile them into the single best final solution. If every "
    "candidate is flawed, solve the problem yourself, reusing whatever partial progress they "
    "contain.\n"
    "\n"
    "Problem:\n"
    "{{question}}\n"
    "\n"
    "{{candidates}}";

constexpr std::string_view kDefaultJudge =
    "Decide whether the predicted answer to the problem below is equivalent to the reference "
    "answer. Mathematically equivalent forms count as equal; anything else does not.\n"
    "\n"
    "Problem:\n"
    "{{question}}\n"
    "\n"
    "Reference answer: {{reference}}\n"
    "Predicted answer: {{answer}}";

struct RolePlaceholders {
    std::vector<std::string_view> allowed;
    std::vector<std::string_view> required;
};

RolePlaceholders placeholders_for(PromptRole role) {
    switch (role) {
        case PromptRole::answer:
            return {{"question"}, {"question"}};
        case PromptRole::verify:
            return {{"question", "solution"}, {"question", "solution"}};
        case PromptRole::summary:
            return {{"question", "candidates"}, {"question", "candidates"}};
        case PromptRole::judge:
            return {{"question", "answer", "reference"}, {"answer", "reference"}};
    }
    return {};
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    });
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    return text;
}

}  // namespace

std::string_view to_string(PromptRole role) {
    switch (role) {
        case PromptRole::answer: return "answer";
        case PromptRole::verify: return "verify";
        case PromptRole::summary: return "summary";
        case PromptRole::judge: return "judge";
    }
    return "unknown";
}

PromptTemplate PromptTemplate::parse(PromptRole role, std::string id, std::string_view text) {
    PromptTemplate tpl;
    tpl.role_ = role;
    tpl.id_ = std::move(id);
    tpl.text_ = std::string(text);

    const RolePlaceholders names = placeholders_for(role);
    std::vector<std::string_view> seen;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            tpl.segments_.push_back({false, std::string(text.substr(pos))});
            break;
        }
        if (open > pos) tpl.segments_.push_back({false, std::string(text.substr(pos, open - pos))});
        std::size_t close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw TemplateError("template '" + tpl.id_ + "': unterminated placeholder at offset " +
                                std::to_string(open));
        }
        std::string_view name = text.substr(open + 2, close - open - 2);
        while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
        while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
        if (!is_identifier(name) ||
            std::find(names.allowed.begin(), names.allowed.end(), name) == names.allowed.end()) {
            throw TemplateError("template '" + tpl.id_ + "': unknown placeholder {{" + std::string(name) +
                                "}} for role " + std::string(to_string(role)));
        }
        seen.push_back(name);
        tpl.segments_.push_back({true, std::string(name)});
        pos = close + 2;
    }

    for (std::string_view required : names.required) {
        if (std::find(seen.begin(), seen.end(), required) == seen.end()) {
            throw TemplateError("template '" + tpl.id_ + "': missing required placeholder {{" +
                                std::string(required) + "}} for role " + std::string(to_string(role)));
        }
    }
    return tpl;
}

std::string PromptTemplate::substitute(
    std::span<const std::pair<std::string_view, std::string_view>> values) const {
    std::string out;
    for (const Segment& seg : segments_) {
        if (!seg.placeholder) {
            out += seg.content;
            continue;
        }
        auto it = std::find_if(values.begin(), values.end(),
                               [&](const auto& kv) { return kv.first == seg.content; });
        if (it == values.end()) {
            throw ContractViolation("template '" + id_ + "': no value for {{" + seg.content + "}}");
        }
        out += it->second;
    }
    return out;
}

void CandidateRendering::validate() const {
    if (per_candidate_chars == 0) throw ContractViolation("rendering.per_candidate_chars must be > 0");
    if (max_candidates == 0) throw ContractViolation("rendering.max_candidates must be > 0");
}

std::string_view default_template_text(PromptRole role) {
    switch (role) {
        case PromptRole::answer: return kDefaultAnswer;
        case PromptRole::verify: return kDefaultVerify;
        case PromptRole::summary: return kDefaultSummary;
        case PromptRole::judge: return kDefaultJudge;
    }
    return {};
}

TemplateSet TemplateSet::defaults() {
    return TemplateSet{
        PromptTemplate::parse(PromptRole::answer, "default/answer", kDefaultAnswer),
        PromptTemplate::parse(PromptRole::verify, "default/verify", kDefaultVerify),
        PromptTemplate::parse(PromptRole::summary, "default/summary", kDefaultSummary),
        PromptTemplate::parse(PromptRole::judge, "default/judge", kDefaultJudge),
    };
}

TemplateSet TemplateSet::load(const std::filesystem::path& directory, const std::string& answer_name,
                              const std::string& verify_name, const std::string& summary_name,
                              const std::string& judge_name) {
    auto load_one = [&](PromptRole role, const std::string& name) {
        return PromptTemplate::parse(role, name, read_file(directory / (name + ".txt")));
    };
    return TemplateSet{
        load_one(PromptRole::answer, answer_name),
        load_one(PromptRole::verify, verify_name),
        load_one(PromptRole::summary, summary_name),
        load_one(PromptRole::judge, judge_name),
    };
}

std::string tail_excerpt(std::string_view text, std::size_t budget) {
    if (text.size() <= budget) return std::string(text);
    std::size_t start = text.size() - budget;
    // Do not split a UTF-8 sequence.
    while (start < text.size() && (static_cast<unsigned char>(text[start]) & 0xC0) == 0x80) ++start;
    return "[...] " + std::string(text.substr(start));
}

RenderedPrompt render_answer(const PromptTemplate& tpl, const Query& query) {
    if (tpl.role() != PromptRole::answer) throw ContractViolation("render_answer needs an answer template");
    const std::array<std::pair<std::string_view, std::string_view>, 1> values{{{"question", query.prompt}}};
    RenderedPrompt out;
    out.text = tpl.substitute(values);
    out.text += kBoxedInstruction;
    out.template_id = tpl.id();
    return out;
}

RenderedPrompt render_verify(const PromptTemplate& tpl, const Query& query, const Candidate& candidate,
                             const CandidateRendering& rendering) {
    if (tpl.role() != PromptRole::verify) throw ContractViolation("render_verify needs a verify template");
    rendering.validate();
    const std::string solution = tail_excerpt(candidate.full_text, rendering.per_candidate_chars);
    const std::array<std::pair<std::string_view, std::string_view>, 2> values{
        {{"question", query.prompt}, {"solution", solution}}};
    RenderedPrompt out;
    out.text = tpl.substitute(values);
    out.text += kVerdictInstruction;
    out.template_id = tpl.id();
    out.subject_texts.push_back(candidate.full_text);
    return out;
}

RenderedPrompt render_summary(const PromptTemplate& tpl, const Query& query, const CandidateSet& pool,
                              const CandidateRendering& rendering, bool allow_empty) {
    if (tpl.role() != PromptRole::summary) throw ContractViolation("render_summary needs a summary template");
    rendering.validate();
    if (pool.empty() && !allow_empty) {
        throw ContractViolation("render_summary: empty candidate pool for query '" + query.id + "'");
    }

    const auto& members = pool.members();
    const std::size_t keep = std::min(members.size(), rendering.max_candidates);
    const auto first = members.end() - static_cast<std::ptrdiff_t>(keep);
    const bool all_unverified =
        keep > 0 && std::all_of(first, members.end(), [](const Candidate& c) { return c.unverified_fallback; });

    RenderedPrompt out;
    std::string block;
    if (keep == 0) {
        block = "Candidate solutions: none available.";
    } else {
        block = all_unverified ? "Candidate solutions (none of them passed verification):"
                               : "Candidate solutions:";
        std::size_t index = 1;
        for (auto it = first; it != members.end(); ++it, ++index) {
            block += "\n\nCandidate ";
            block += std::to_string(index);
            if (rendering.include_full_reasoning) {
                block += " (answer: ";
                block += it->extracted_answer;
                block += "):\n";
                block += tail_excerpt(it->full_text, rendering.per_candidate_chars);
            } else {
                block += ": ";
                block += it->extracted_answer;
            }
            out.subject_texts.push_back(it->full_text);
        }
    }

    const std::array<std::pair<std::string_view, std::string_view>, 2> values{
        {{"question", query.prompt}, {"candidates", block}}};
    out.text = tpl.substitute(values);
    out.text += kBoxedInstruction;
    out.template_id = tpl.id();
    return out;
}

RenderedPrompt render_judge(const PromptTemplate& tpl, const Query& query, std::string_view predicted) {
    if (tpl.role() != PromptRole::judge) throw ContractViolation("render_judge needs a judge template");
    if (!query.ground_truth) throw ContractViolation("render_judge: query '" + query.id + "' has no ground truth");
    const std::array<std::pair<std::string_view, std::string_view>, 3> values{
        {{"question", query.prompt}, {"answer", predicted}, {"reference", *query.ground_truth}}};
    RenderedPrompt out;
    out.text = tpl.substitute(values);
    out.text += kVerdictInstruction;
    out.template_id = tpl.id();
    out.subject_texts.emplace_back(predicted);
    return out;
}

}  // namespace matryoshka
