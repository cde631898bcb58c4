#include "seqvimp/characterize.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace seqvimp {

namespace {

constexpr int kQuadPanels = 10000;
constexpr double kRootTol = 1e-10;
// |f'(0)| below this counts as the singular point where the nonzero root
// degenerates to 0.
constexpr double kSlopeTol = 1e-12;

void require_ratio_method(const SequentialSpec& spec, const char* who) {
    if (spec.method != Method::Sprt && spec.method != Method::Sapt)
        throw std::logic_error(std::string(who) +
                               ": only sprt and sapt have these characteristics");
}

template <class F>
double simpson(F f, double a, double b, int panels) {
    const double step = (b - a) / panels;
    double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i)
        acc += f(a + i * step) * (i % 2 ? 4.0 : 2.0);
    return acc * step / 3.0;
}

}  // namespace

double singular_p(double p0, double p1) {
    const double la = std::log(p1 / p0);
    const double lb = std::log((1.0 - p1) / (1.0 - p0));
    return lb / (lb - la);
}

double solve_k(double p, double p0, double p1) {
    if (!(0.0 < p1 && p1 < p0 && p0 < 1.0))
        throw std::logic_error("solve_k: require 0 < p1 < p0 < 1");
    if (!(0.0 < p && p < 1.0))
        throw std::logic_error("solve_k: require 0 < p < 1");
    const double la = std::log(p1 / p0);                  // < 0
    const double lb = std::log((1.0 - p1) / (1.0 - p0));  // > 0
    const double slope0 = p * la + (1.0 - p) * lb;        // f'(0)
    if (std::abs(slope0) < kSlopeTol) return 0.0;

    // f(k) = p e^{k la} + (1-p) e^{k lb} - 1 is convex with f(0) = 0, so the
    // chord slope g(k) = f(k)/k (with g(0) = f'(0)) is nondecreasing and the
    // nonzero root of f is the sign change of g, on the side where f falls
    // below zero first.
    auto chord = [&](double k) {
        const double f = p * std::exp(k * la) + (1.0 - p) * std::exp(k * lb) - 1.0;
        return f / k;
    };

    double lo, hi;
    if (slope0 > 0.0) {  // root is negative
        hi = 0.0;
        lo = -1.0;
        while (chord(lo) > 0.0) {
            lo *= 2.0;
            if (lo < -1e18) {
                std::ostringstream err;
                err << "solve_k: no sign change for p=" << p << " p0=" << p0
                    << " p1=" << p1 << " down to k=" << lo;
                throw NumericError(err.str());
            }
        }
    } else {  // root is positive
        lo = 0.0;
        hi = 1.0;
        while (chord(hi) < 0.0) {
            hi *= 2.0;
            if (hi > 1e18) {
                std::ostringstream err;
                err << "solve_k: no sign change for p=" << p << " p0=" << p0
                    << " p1=" << p1 << " up to k=" << hi;
                throw NumericError(err.str());
            }
        }
    }
    // g is nondecreasing: keep g(lo) <= 0 <= g(hi).  The special value
    // g(0) = f'(0) has the correct sign on whichever end 0 occupies.
    while (hi - lo > kRootTol) {
        const double mid = 0.5 * (lo + hi);
        const double g = mid == 0.0 ? slope0 : chord(mid);
        if (g < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double power_function(double p, const SequentialSpec& spec) {
    require_ratio_method(spec, "power_function");
    if (p < 0.0 || p > 1.0)
        throw std::logic_error("power_function: p outside [0, 1]");
    if (p == 0.0) return 1.0;
    if (p == 1.0) return 0.0;
    const double k = solve_k(p, spec.p0, spec.p1);
    const double logA = std::log(spec.A);
    const double logB = std::log(spec.B);
    if (k == 0.0) return -logA / (logB - logA);
    // Keep exp() in range; in these regimes A^k dominates and the ratio has
    // already saturated at its k -> -inf / +inf limit.
    if (k * logA > 700.0 || k * logB > 700.0) return k < 0.0 ? 1.0 : 0.0;
    const double Ak = std::exp(k * logA);
    const double Bk = std::exp(k * logB);
    return (1.0 - Ak) / (Bk - Ak);
}

double expected_permutations(double p, const SequentialSpec& spec) {
    require_ratio_method(spec, "expected_permutations");
    if (p < 0.0 || p > 1.0)
        throw std::logic_error("expected_permutations: p outside [0, 1]");
    const double la = std::log(spec.p1 / spec.p0);
    const double lb = std::log((1.0 - spec.p1) / (1.0 - spec.p0));
    if (p == 0.0) return std::log(spec.B) / lb;
    if (p == 1.0) return std::log(spec.A) / la;
    const double ps = singular_p(spec.p0, spec.p1);
    if (std::abs(p - ps) < 1e-8) {
        // Removable 0/0: average symmetric offsets around the singular point.
        const double off = 1e-6;
        const double below = std::max(ps - off, 0.5 * ps);
        const double above = std::min(ps + off, 0.5 * (1.0 + ps));
        return 0.5 * (expected_permutations(below, spec) +
                      expected_permutations(above, spec));
    }
    const double L = power_function(p, spec);
    const double denom = p * la + (1.0 - p) * lb;
    return (L * std::log(spec.B) + (1.0 - L) * std::log(spec.A)) / denom;
}

double effective_alpha(const SequentialSpec& spec) {
    require_ratio_method(spec, "effective_alpha");
    return simpson([&](double p) { return power_function(p, spec); }, 0.0, 1.0,
                   kQuadPanels);
}

double average_expected_permutations(const SequentialSpec& spec) {
    require_ratio_method(spec, "average_expected_permutations");
    return simpson([&](double p) { return expected_permutations(p, spec); },
                   0.0, 1.0, kQuadPanels);
}

double pval_expected_m(int h, int M) {
    if (!(1 <= h && h <= M))
        throw ConfigError("pval_expected_m: require 1 <= h <= M");
    return h + h * std::log((M + 0.5) / (h + 0.5));
}

double pval_se_fraction(int h) {
    if (h < 1) throw ConfigError("pval_se_fraction: require h >= 1");
    return 1.0 / std::sqrt(double(h));
}

std::vector<OperatingCharacteristic> characterize_grid(
    const SequentialSpec& spec, int points) {
    require_ratio_method(spec, "characterize_grid");
    if (points < 2) throw ConfigError("characterize_grid: require points >= 2");
    const double ps = singular_p(spec.p0, spec.p1);
    std::vector<OperatingCharacteristic> grid;
    grid.reserve(points + 1);
    for (int i = 0; i <= points; ++i) {
        const double p = double(i) / points;
        OperatingCharacteristic oc;
        oc.p = p;
        if (i == 0 || i == points)
            oc.k = std::numeric_limits<double>::quiet_NaN();  // root diverges
        else if (std::abs(p - ps) < 1e-12)
            oc.k = 0.0;
        else
            oc.k = solve_k(p, spec.p0, spec.p1);
        oc.L_p = power_function(p, spec);
        oc.E_m = expected_permutations(p, spec);
        grid.push_back(oc);
    }
    return grid;
}

void write_boundary_table(std::ostream& out, const SequentialSpec& spec,
                          int m_max) {
    if (m_max <= 0) m_max = spec.M;
    out << "m,lower_H1,upper_H0\n";
    out << std::setprecision(6);
    for (int m = 1; m <= m_max; ++m) {
        const DecisionBounds b = sprt_boundaries(spec, m);
        out << m << ',' << b.lower_h1 << ',' << b.upper_h0 << '\n';
    }
}

void write_characteristic_table(
    std::ostream& out, const std::vector<OperatingCharacteristic>& grid) {
    out << "p,k,L_p,E_m\n";
    out << std::setprecision(6);
    for (const OperatingCharacteristic& oc : grid)
        out << oc.p << ',' << oc.k << ',' << oc.L_p << ',' << oc.E_m << '\n';
}

}  // namespace seqvimp
