#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace matryoshka::analytics {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct PassAtKInput {
    int n = 0;  // samples per problem
    int c = 0;  // correct samples
    int k = 1;  // draw size
};

/// 1 - C(n-c, k) / C(n, k), evaluated as 1 - prod_{i<k} (n-c-i)/(n-i).
double pass_at_k(const PassAtKInput& input);

struct ProblemCounts {
    int n = 0;
    int c = 0;
};

/// Mean pass@k over problems for every k in `ks`. All problems must share the same n.
std::vector<std::pair<int, double>> pass_at_k_curve(std::span<const ProblemCounts> problems,
                                                    std::span<const int> ks);

/// Shannon entropy (bits) of the empirical answer distribution; "unextractable" is one category.
double answer_entropy(std::span<const std::string> answers);

/// P[accepted] = p*tpr + (1-p)*fpr.
double acceptance_probability(double p, double tpr, double fpr);

/// P[correct | accepted]; 0 when nothing is ever accepted.
double posterior_correct(double p, double tpr, double fpr);

/// 1 - (1-q)^n_v, with n_v = 0 giving 0.
double p_has_correct(double q, int n_v);

/// C(N, n_v) p^n_v (1-p)^(N-n_v), evaluated in log space with Loader's saddle-point
/// decomposition so that N up to 1e4 keeps ~1e-15 relative accuracy.
double binomial_pmf(int trials, double p_acc, int successes);

/// Whole pmf, index = number of successes.
std::vector<double> binomial_distribution(int trials, double p_acc);

struct AnalyticalParams {
    double p = 0.5;    // initial pass@1
    double tpr = 0.9;
    double fpr = 0.1;
    double s1 = 0.95;  // S(r > 0)
    double s0 = 0.1;   // S(r = 0)
    int n_total = 32;  // initial generations per query

    void validate() const;
};

/// Accuracy after one verify-then-summarize round:
///   sum_{n_v} Bin(N, p_acc, n_v) * [ (1-(1-q)^n_v) * s1 + (1-q)^n_v * s0 ].
double pass1_final(const AnalyticalParams& params);

/// Tabulated summarizer accuracy S(r) over the correct fraction r of the pool.
/// r = 0 maps to `at_zero`; r in (0, 1] maps to bins[min(B-1, floor(r*B))].
struct SummaryCurve {
    double at_zero = 0.0;
    std::vector<double> bins;

    static SummaryCurve two_valued(double s0, double s1) { return {s0, {s1}}; }
    double operator()(double r) const;
    void validate() const;
};

/// Generalisation of pass1_final to an arbitrary S(r): the number of correct members of a
/// pool of size n_v is Binomial(n_v, q). `params.s0` and `params.s1` are ignored.
double pass1_final(const AnalyticalParams& params, const SummaryCurve& curve);

}  // namespace matryoshka::analytics
