#include "matryoshka/core.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <cctype>
#include <utility>

namespace matryoshka {

namespace {

// ASCII only, independent of the C locale.
bool is_space(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

char ascii_upper(char c) { return c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : c; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (ascii_upper(s[i]) != ascii_upper(prefix[i])) return false;
    }
    return true;
}

// Calls fn(line) for every newline-separated line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        fn(text.substr(pos, end - pos));
        pos = end + 1;
    }
}

bool candidate_order(const Candidate& a, const Candidate& b) {
    return std::pair(a.loop_index, a.sample_index) < std::pair(b.loop_index, b.sample_index);
}

}  // namespace

CandidateSet CandidateSet::with(std::span<const Candidate> extra) const {
    CandidateSet out(query_id_);
    out.members_ = members_;
    out.members_.insert(out.members_.end(), extra.begin(), extra.end());
    std::stable_sort(out.members_.begin(), out.members_.end(), candidate_order);
    return out;
}

CandidateSet CandidateSet::with(std::vector<Candidate>&& extra) const {
    CandidateSet out(query_id_);
    out.members_.reserve(members_.size() + extra.size());
    out.members_.insert(out.members_.end(), members_.begin(), members_.end());
    std::move(extra.begin(), extra.end(), std::back_inserter(out.members_));
    std::stable_sort(out.members_.begin(), out.members_.end(), candidate_order);
    return out;
}

VerificationVerdict judge(std::string_view verifier_output) {
    static constexpr std::string_view kMarker = "FINAL VERDICT:";

    std::optional<std::string_view> last_marker_line;
    for_each_line(verifier_output, [&](std::string_view line) {
        std::string_view body = trim(line);
        if (starts_with_icase(body, kMarker)) last_marker_line = body.substr(kMarker.size());
    });

    VerificationVerdict verdict;
    verdict.raw_text = std::string(verifier_output);
    if (!last_marker_line) return verdict;

    std::string_view rest = trim(*last_marker_line);
    auto token_matches = [&](std::string_view token) {
        if (!starts_with_icase(rest, token)) return false;
        if (rest.size() == token.size()) return true;
        unsigned char next = static_cast<unsigned char>(rest[token.size()]);
        return std::isalnum(next) == 0 && next != '_';
    };
    if (token_matches("INCORRECT")) {
        verdict.parse_ok = true;
    } else if (token_matches("CORRECT")) {
        verdict.parse_ok = true;
        verdict.accepted = true;
    }
    return verdict;
}

CandidateSet union_accepted(const CandidateSet& set, std::span<const Candidate> batch) {
    std::vector<Candidate> accepted;
    for (const Candidate& c : batch) {
        if (!c.verdict) {
            throw ContractViolation("union_accepted: candidate (loop " + std::to_string(c.loop_index) +
                                    ", sample " + std::to_string(c.sample_index) + ") has no verdict");
        }
        if (c.verdict->accepted) accepted.push_back(c);
    }
    return set.with(std::move(accepted));
}

std::string canonicalize_answer(std::string_view raw) {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kDelimiters{{
        {"$$", "$$"},
        {"\\(", "\\)"},
        {"\\[", "\\]"},
        {"$", "$"},
    }};

    std::string_view s = trim(raw);
    bool stripped = true;
    while (stripped) {
        stripped = false;
        for (const auto& [open, close] : kDelimiters) {
            if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
                s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
                stripped = true;
                break;
            }
        }
    }

    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::string extract_answer(std::string_view full_text) {
    static constexpr std::string_view kBoxed = "\\boxed{";

    std::size_t search_end = full_text.size();
    while (search_end > 0) {
        std::size_t start = full_text.rfind(kBoxed, search_end - 1);
        if (start == std::string_view::npos) break;
        std::size_t content_begin = start + kBoxed.size();
        int depth = 1;
        std::size_t i = content_begin;
        for (; i < full_text.size(); ++i) {
            if (full_text[i] == '{') {
                ++depth;
            } else if (full_text[i] == '}' && --depth == 0) {
                break;
            }
        }
        if (depth == 0) {
            std::string answer = canonicalize_answer(full_text.substr(content_begin, i - content_begin));
            if (!answer.empty()) return answer;
        }
        search_end = start;
    }

    static constexpr std::string_view kFinalAnswer = "FINAL ANSWER:";
    std::string answer;
    for_each_line(full_text, [&](std::string_view line) {
        std::string_view body = trim(line);
        if (starts_with_icase(body, kFinalAnswer)) {
            std::string candidate = canonicalize_answer(body.substr(kFinalAnswer.size()));
            if (!candidate.empty()) answer = std::move(candidate);
        }
    });
    if (!answer.empty()) return answer;
    return std::string(kUnextractable);
}

}  // namespace matryoshka
