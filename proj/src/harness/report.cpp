#include "matryoshka/harness/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "matryoshka/analytics.hpp"

namespace matryoshka::harness {

using nlohmann::json;

namespace {

json usage_json(const TokenUsage& u) {
    return {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}, {"total_tokens", u.total()}};
}

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json optional_list(const std::vector<std::optional<double>>& values) {
    json out = json::array();
    for (const auto& v : values) out.push_back(optional_json(v));
    return out;
}

}  // namespace

void RunReport::aggregate(const std::vector<int>& ks) {
    evaluated = correct = failed = excluded = 0;
    tokens = {};
    max_query_tokens = 0;
    std::size_t votes = 0;
    std::size_t votes_correct = 0;
    std::vector<double> entropy_sum;
    std::vector<std::size_t> entropy_count;
    std::vector<analytics::ProblemCounts> problems;

    for (const QueryReport& q : queries) {
        if (q.failed) ++failed;
        if (q.correct) {
            ++evaluated;
            if (*q.correct) ++correct;
        } else {
            ++excluded;
        }
        tokens += q.usage;
        max_query_tokens = std::max(max_query_tokens, q.usage.total());
        if (q.majority_vote_correct) {
            ++votes;
            if (*q.majority_vote_correct) ++votes_correct;
        }
        if (entropy_sum.size() < q.entropy_per_loop.size()) {
            entropy_sum.resize(q.entropy_per_loop.size(), 0.0);
            entropy_count.resize(q.entropy_per_loop.size(), 0);
        }
        for (std::size_t l = 0; l < q.entropy_per_loop.size(); ++l) {
            if (q.entropy_per_loop[l]) {
                entropy_sum[l] += *q.entropy_per_loop[l];
                ++entropy_count[l];
            }
        }
        if (q.ground_truth && q.initial_samples > 0) problems.push_back({q.initial_samples, q.initial_correct});
    }

    accuracy = evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0;
    majority_vote_accuracy.reset();
    if (votes) majority_vote_accuracy = static_cast<double>(votes_correct) / static_cast<double>(votes);

    mean_entropy_per_loop.clear();
    for (std::size_t l = 0; l < entropy_sum.size(); ++l) {
        mean_entropy_per_loop.push_back(entropy_count[l] ? std::optional<double>(entropy_sum[l] / static_cast<double>(entropy_count[l]))
                                                         : std::nullopt);
    }

    pass_at_k.clear();
    pass_at_k_note.clear();
    if (problems.empty()) {
        pass_at_k_note = "no labeled queries with initial samples";
    } else if (std::any_of(problems.begin(), problems.end(),
                           [&](const auto& p) { return p.n != problems.front().n; })) {
        pass_at_k_note = "initial sample counts differ across queries (failed calls); pass@k omitted";
    } else {
        std::vector<int> usable;
        for (int k : ks) {
            if (k <= problems.front().n) usable.push_back(k);
        }
        if (usable.size() != ks.size()) pass_at_k_note = "k values above the sample count were skipped";
        pass_at_k = analytics::pass_at_k_curve(problems, usable);
    }
}

json RunReport::to_json() const {
    json per_query = json::array();
    for (const QueryReport& q : queries) {
        per_query.push_back({
            {"id", q.id},
            {"ground_truth", optional_json(q.ground_truth)},
            {"final_answer", q.final_answer},
            {"correct", optional_json(q.correct)},
            {"failed", q.failed},
            {"failure", q.failure},
            {"evaluation_error", q.evaluation_error},
            {"usage", usage_json(q.usage)},
            {"entropy_per_loop", optional_list(q.entropy_per_loop)},
            {"accepted_per_loop", q.accepted_per_loop},
            {"majority_vote_answer", optional_json(q.majority_vote_answer)},
            {"majority_vote_correct", optional_json(q.majority_vote_correct)},
            {"initial_samples", q.initial_samples},
            {"initial_correct", q.initial_correct},
        });
    }
    json curve = json::object();
    for (const auto& [k, v] : pass_at_k) curve[std::to_string(k)] = v;

    return {
        {"run",
         {{"ablation", ablation},
          {"loops", loops},
          {"samples_per_loop", samples_per_loop},
          {"verify_enabled", verify_enabled},
          {"summary_enabled", summary_enabled},
          {"backend", backend},
          {"evaluation", evaluation},
          {"seed", seed}}},
        {"summary",
         {{"queries", queries.size()},
          {"evaluated", evaluated},
          {"correct", correct},
          {"failed", failed},
          {"excluded", excluded},
          {"accuracy", accuracy},
          {"majority_vote_accuracy", optional_json(majority_vote_accuracy)},
          {"pass_at_k_initial_samples", curve},
          {"pass_at_k_note", pass_at_k_note},
          {"tokens_total", usage_json(tokens)},
          {"tokens_max_per_query", max_query_tokens},
          {"trace_total_tokens", trace_total_tokens},
          {"mean_entropy_per_loop", optional_list(mean_entropy_per_loop)}}},
        {"queries", per_query},
    };
}

std::string RunReport::summary_text() const {
    std::ostringstream out;
    char buf[128];
    out << "ablation " << ablation << " | loops " << loops << " | samples/loop " << samples_per_loop << " | backend "
        << backend << " | evaluation " << evaluation << "\n";
    std::snprintf(buf, sizeof buf, "accuracy        %.4f (%zu/%zu evaluated, %zu failed, %zu excluded)\n", accuracy,
                  correct, evaluated, failed, excluded);
    out << buf;
    if (excluded > 0) {
        out << "warning: " << excluded << " quer" << (excluded == 1 ? "y" : "ies")
            << " excluded from accuracy (no ground truth or judge failure, see evaluation_error)\n";
    }
    if (majority_vote_accuracy) {
        std::snprintf(buf, sizeof buf, "majority vote   %.4f (over %d initial samples)\n", *majority_vote_accuracy,
                      samples_per_loop);
        out << buf;
    }
    for (const auto& [k, v] : pass_at_k) {
        std::snprintf(buf, sizeof buf, "pass@%-3d        %.4f\n", k, v);
        out << buf;
    }
    out << "tokens total    " << tokens.total() << " (max per query " << max_query_tokens << ", trace "
        << trace_total_tokens << ")\n";
    for (std::size_t l = 0; l < mean_entropy_per_loop.size(); ++l) {
        if (!mean_entropy_per_loop[l]) continue;
        std::snprintf(buf, sizeof buf, "entropy loop %zu  %.4f bits\n", l, *mean_entropy_per_loop[l]);
        out << buf;
    }
    return out.str();
}

}  // namespace matryoshka::harness
