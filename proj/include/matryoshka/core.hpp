#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace matryoshka {

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline constexpr std::string_view kUnextractable = "unextractable";

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    std::int64_t total() const { return prompt_tokens + completion_tokens; }

    TokenUsage& operator+=(const TokenUsage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }
    friend TokenUsage operator+(TokenUsage a, const TokenUsage& b) { return a += b; }
    friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct Query {
    std::string id;
    std::string prompt;
    std::optional<std::string> ground_truth;
};

struct VerificationVerdict {
    std::string raw_text;
    bool accepted = false;
    bool parse_ok = false;

    int judgment() const { return accepted ? 1 : 0; }
};

struct Candidate {
    int loop_index = 0;
    int sample_index = 1;
    std::string full_text;
    std::string extracted_answer{kUnextractable};
    std::optional<VerificationVerdict> verdict;
    TokenUsage usage;
    // Set when the candidate reaches summarization without having passed verification.
    bool unverified_fallback = false;
};

/// Accumulated multiset of accepted candidates, ordered by (loop_index, sample_index).
/// Candidates with identical text are kept: repetition is a signal for the summarizer.
class CandidateSet {
public:
    CandidateSet() = default;
    explicit CandidateSet(std::string query_id) : query_id_(std::move(query_id)) {}

    const std::string& query_id() const { return query_id_; }
    const std::vector<Candidate>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }

    /// Returns a copy with `extra` merged in, keeping the (loop, sample) order.
    CandidateSet with(std::span<const Candidate> extra) const;
    CandidateSet with(std::vector<Candidate>&& extra) const;

private:
    std::string query_id_;
    std::vector<Candidate> members_;
};

/// Maps verifier output to the binary judgment.
/// The last line starting with `FINAL VERDICT:` decides; anything else rejects.
VerificationVerdict judge(std::string_view verifier_output);

/// set ∪ {accepted members of batch}. Throws ContractViolation on an unverified batch member.
CandidateSet union_accepted(const CandidateSet& set, std::span<const Candidate> batch);

/// Trim, collapse internal whitespace and strip one layer of surrounding LaTeX math delimiters.
std::string canonicalize_answer(std::string_view raw);

/// Last balanced `\boxed{...}`, else last line-anchored `FINAL ANSWER:`; "unextractable" otherwise.
std::string extract_answer(std::string_view full_text);

}  // namespace matryoshka
