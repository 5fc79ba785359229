#include "matryoshka/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace matryoshka::analytics {

namespace {

void require_probability(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError(std::string(name) + " must lie in [0, 1]");
}

// Stirling-series remainder: log(n!) - [(n+0.5)log(n) - n + log(sqrt(2*pi))].
double stirling_error(int n) {
    if (n <= 15) {
        if (n == 0) return 0.0;
        double factorial = 1.0;
        for (int i = 2; i <= n; ++i) factorial *= i;
        const double x = n;
        return std::log(factorial) - (x + 0.5) * std::log(x) + x - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    constexpr double S0 = 1.0 / 12.0;
    constexpr double S1 = 1.0 / 360.0;
    constexpr double S2 = 1.0 / 1260.0;
    constexpr double S3 = 1.0 / 1680.0;
    constexpr double S4 = 1.0 / 1188.0;
    const double x = n;
    const double xx = x * x;
    if (n > 500) return (S0 - S1 / xx) / x;
    if (n > 80) return (S0 - (S1 - S2 / xx) / xx) / x;
    if (n > 35) return (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x;
    return (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x;
}

// Deviance term x*log(x/np) + np - x, computed without cancellation when x ~ np.
double deviance(double x, double np) {
    if (std::abs(x - np) < 0.1 * (x + np)) {
        double v = (x - np) / (x + np);
        double s = (x - np) * v;
        double ej = 2.0 * x * v;
        v *= v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v;
            const double s1 = s + ej / (2 * j + 1);
            if (s1 == s) return s1;
            s = s1;
        }
        return s;
    }
    return x * std::log(x / np) + np - x;
}

}  // namespace

double pass_at_k(const PassAtKInput& in) {
    if (in.n < 0 || in.c < 0 || in.c > in.n) throw DomainError("pass_at_k: need 0 <= c <= n");
    if (in.k < 1 || in.k > in.n) throw DomainError("pass_at_k: need 1 <= k <= n");
    const int wrong = in.n - in.c;
    if (wrong < in.k) return 1.0;
    double all_wrong = 1.0;
    for (int i = 0; i < in.k; ++i) {
        all_wrong *= static_cast<double>(wrong - i) / static_cast<double>(in.n - i);
    }
    return 1.0 - all_wrong;
}

std::vector<std::pair<int, double>> pass_at_k_curve(std::span<const ProblemCounts> problems,
                                                    std::span<const int> ks) {
    if (problems.empty()) throw DomainError("pass_at_k_curve: no problems");
    const int n = problems.front().n;
    for (const ProblemCounts& pc : problems) {
        if (pc.n != n) throw DomainError("pass_at_k_curve: problems have different sample counts");
    }
    std::vector<std::pair<int, double>> curve;
    curve.reserve(ks.size());
    for (int k : ks) {
        double sum = 0.0;
        for (const ProblemCounts& pc : problems) sum += pass_at_k({pc.n, pc.c, k});
        curve.emplace_back(k, sum / static_cast<double>(problems.size()));
    }
    return curve;
}

double answer_entropy(std::span<const std::string> answers) {
    if (answers.empty()) throw DomainError("answer_entropy: empty answer list");
    std::map<std::string_view, std::size_t> counts;
    for (const std::string& a : answers) ++counts[a];
    const double n = static_cast<double>(answers.size());
    double h = 0.0;
    for (const auto& [answer, count] : counts) {
        const double p = static_cast<double>(count) / n;
        h -= p * std::log2(p);
    }
    return h == 0.0 ? 0.0 : h;
}

double acceptance_probability(double p, double tpr, double fpr) {
    require_probability(p, "p");
    require_probability(tpr, "tpr");
    require_probability(fpr, "fpr");
    return p * tpr + (1.0 - p) * fpr;
}

double posterior_correct(double p, double tpr, double fpr) {
    const double accepted = acceptance_probability(p, tpr, fpr);
    if (accepted == 0.0) return 0.0;
    return p * tpr / accepted;
}

double p_has_correct(double q, int n_v) {
    require_probability(q, "q");
    if (n_v < 0) throw DomainError("p_has_correct: n_v must be >= 0");
    if (n_v == 0) return 0.0;
    return 1.0 - std::pow(1.0 - q, n_v);
}

double binomial_pmf(int trials, double p_acc, int successes) {
    require_probability(p_acc, "p_acc");
    if (trials < 0) throw DomainError("binomial_pmf: trials must be >= 0");
    if (successes < 0 || successes > trials) throw DomainError("binomial_pmf: need 0 <= n_v <= N");

    const double q_acc = 1.0 - p_acc;
    if (p_acc == 0.0) return successes == 0 ? 1.0 : 0.0;
    if (q_acc == 0.0) return successes == trials ? 1.0 : 0.0;

    const double n = trials;
    if (successes == 0) {
        const double log_mass = p_acc < 0.1 ? -deviance(n, n * q_acc) - n * p_acc : n * std::log(q_acc);
        return std::exp(log_mass);
    }
    if (successes == trials) {
        const double log_mass = q_acc < 0.1 ? -deviance(n, n * p_acc) - n * q_acc : n * std::log(p_acc);
        return std::exp(log_mass);
    }
    const double x = successes;
    const double log_core = stirling_error(trials) - stirling_error(successes) -
                            stirling_error(trials - successes) - deviance(x, n * p_acc) -
                            deviance(n - x, n * q_acc);
    const double log_scale = std::log(2.0 * std::numbers::pi) + std::log(x) + std::log1p(-x / n);
    return std::exp(log_core - 0.5 * log_scale);
}

std::vector<double> binomial_distribution(int trials, double p_acc) {
    std::vector<double> pmf(static_cast<std::size_t>(trials) + 1);
    for (int k = 0; k <= trials; ++k) pmf[static_cast<std::size_t>(k)] = binomial_pmf(trials, p_acc, k);
    return pmf;
}

void AnalyticalParams::validate() const {
    require_probability(p, "p");
    require_probability(tpr, "tpr");
    require_probability(fpr, "fpr");
    require_probability(s1, "s1");
    require_probability(s0, "s0");
    if (n_total < 1) throw DomainError("N must be >= 1");
}

double pass1_final(const AnalyticalParams& params) {
    params.validate();
    const double accept = acceptance_probability(params.p, params.tpr, params.fpr);
    const double q = posterior_correct(params.p, params.tpr, params.fpr);
    double total = 0.0;
    for (int n_v = 0; n_v <= params.n_total; ++n_v) {
        const double has = p_has_correct(q, n_v);
        total += binomial_pmf(params.n_total, accept, n_v) * (has * params.s1 + (1.0 - has) * params.s0);
    }
    return total;
}

double SummaryCurve::operator()(double r) const {
    if (r <= 0.0) return at_zero;
    const auto bin_count = static_cast<double>(bins.size());
    const auto index = std::min(bins.size() - 1, static_cast<std::size_t>(std::floor(r * bin_count)));
    return bins[index];
}

void SummaryCurve::validate() const {
    require_probability(at_zero, "S(0)");
    if (bins.empty()) throw DomainError("summary curve needs at least one bin");
    for (double b : bins) require_probability(b, "S(r)");
}

double pass1_final(const AnalyticalParams& params, const SummaryCurve& curve) {
    params.validate();
    curve.validate();
    const double accept = acceptance_probability(params.p, params.tpr, params.fpr);
    const double q = posterior_correct(params.p, params.tpr, params.fpr);
    double total = 0.0;
    for (int n_v = 0; n_v <= params.n_total; ++n_v) {
        const double pool_mass = binomial_pmf(params.n_total, accept, n_v);
        if (pool_mass == 0.0) continue;
        double summary = 0.0;
        if (n_v == 0) {
            summary = curve.at_zero;
        } else {
            for (int correct = 0; correct <= n_v; ++correct) {
                summary += binomial_pmf(n_v, q, correct) *
                           curve(static_cast<double>(correct) / static_cast<double>(n_v));
            }
        }
        total += pool_mass * summary;
    }
    return total;
}

}  // namespace matryoshka::analytics
