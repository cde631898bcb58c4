#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "seqvimp/characterize.hpp"
#include "seqvimp/monitor.hpp"

using namespace seqvimp;

namespace {

// Residual of the defining equation p a^k + (1-p) b^k = 1 with a = p1/p0,
// b = (1-p1)/(1-p0); solve_k must drive this to ~0 at its nonzero root.
double defining_residual(double k, double p, double p0, double p1) {
    return p * std::pow(p1 / p0, k) +
           (1.0 - p) * std::pow((1.0 - p1) / (1.0 - p0), k) - 1.0;
}

// Exact expected stopping stage of the h-exceedance rule under p uniform on
// [0,1]: integrating the binomial tail gives P(m > j) = min(h, j+1)/(j+1),
// so the mean is h plus h times a harmonic-number difference.  Serves as the
// independent check that the logarithmic formula is a close approximation.
double harmonic_expected_m(int h, int M) {
    double tail = 0.0;
    for (int n = h + 1; n <= M; ++n) tail += 1.0 / n;
    return h + h * tail;
}

// The same spec with the cap pushed far out of reach, so every replay runs
// until a likelihood-ratio boundary is crossed.  This is the regime the
// crossing-probability formulas describe; the production cap M = 500 remaps
// undecided runs through the full-sample fallback and therefore realizes a
// different (truncated) characteristic near the boundary slope.
SequentialSpec uncapped(SequentialSpec spec) {
    spec.M = 2000000;
    return spec;
}

struct ReplaySummary {
    double h1_rate = 0;
    double mean_m = 0;
};

// Empirical acceptance rate and mean stopping stage over Bernoulli(p)
// exceedance streams.
ReplaySummary replay_at(const SequentialSpec& spec, double p, int reps,
                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(p);
    Monitor mon(spec);
    ReplaySummary out;
    for (int r = 0; r < reps; ++r) {
        mon.reset();
        while (!mon.done()) mon.step(coin(rng));
        out.h1_rate += mon.state().decision == Decision::AcceptH1;
        out.mean_m += mon.state().m;
    }
    out.h1_rate /= reps;
    out.mean_m /= reps;
    return out;
}

// Same, with p drawn uniformly per replay: the mixture under which the
// integral characteristics are defined.
ReplaySummary replay_uniform_mixture(const SequentialSpec& spec, int reps,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Monitor mon(spec);
    ReplaySummary out;
    for (int r = 0; r < reps; ++r) {
        std::bernoulli_distribution coin(unif(rng));
        mon.reset();
        while (!mon.done()) mon.step(coin(rng));
        out.h1_rate += mon.state().decision == Decision::AcceptH1;
        out.mean_m += mon.state().m;
    }
    out.h1_rate /= reps;
    out.mean_m /= reps;
    return out;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// Parses "a,b,c" rows of the boundary table.
struct BoundaryRow {
    int m = 0;
    double lower_h1 = 0;
    double upper_h0 = 0;
};

BoundaryRow parse_boundary_row(const std::string& line) {
    BoundaryRow row;
    char comma = 0;
    std::istringstream in(line);
    in >> row.m >> comma >> row.lower_h1 >> comma >> row.upper_h0;
    REQUIRE(in);
    return row;
}

constexpr std::uint64_t kSeed = 20260821;
constexpr int kReps = 10000;

}  // namespace

TEST_CASE("root of the defining equation hits the design exponents") {
    // k = 1 at p0 and k = -1 at p1 make the crossing probabilities reproduce
    // the nominal error rates; both must come out to root-solver tolerance.
    CHECK(solve_k(0.06, 0.06, 0.04) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(solve_k(0.04, 0.06, 0.04) == doctest::Approx(-1.0).epsilon(1e-8));

    const double ps = singular_p(0.06, 0.04);
    for (double p = 0.005; p < 1.0; p += 0.0199) {
        const double k = solve_k(p, 0.06, 0.04);
        if (std::abs(p - ps) < 1e-6) continue;
        CHECK(std::abs(defining_residual(k, p, 0.06, 0.04)) < 1e-8);
        // Root changes side exactly at the singular point.
        CHECK((p > ps ? k > 0.0 : k < 0.0));
    }
    CHECK(solve_k(ps, 0.06, 0.04) == 0.0);

    // A steeper hypothesis pair exercises the expanding bracket.
    const double k = solve_k(0.5, 0.10, 0.02);
    CHECK(std::abs(defining_residual(k, 0.5, 0.10, 0.02)) < 1e-8);

    CHECK_THROWS_AS(solve_k(0.5, 0.04, 0.06), std::logic_error);
    CHECK_THROWS_AS(solve_k(0.0, 0.06, 0.04), std::logic_error);
    CHECK_THROWS_AS(solve_k(1.0, 0.06, 0.04), std::logic_error);
}

TEST_CASE("singular point is the zero-drift probability") {
    const double la = std::log(2.0 / 3.0);
    const double lb = std::log(0.96 / 0.94);
    const double ps = singular_p(0.06, 0.04);
    CHECK(ps == doctest::Approx(lb / (lb - la)).epsilon(1e-14));
    CHECK(ps == doctest::Approx(0.04936106720714294).epsilon(1e-12));
    // Defining property: the exceedance stream has zero log-likelihood drift.
    CHECK(std::abs(ps * la + (1.0 - ps) * lb) < 1e-15);

    // The acceptance corridors climb at exactly this rate, for both regimes:
    // the boundary slope and the singular probability are the same number.
    for (const SequentialSpec& spec :
         {SequentialSpec::sprt(), SequentialSpec::sapt()}) {
        const DecisionBounds at40 = sprt_boundaries(spec, 40);
        const DecisionBounds at41 = sprt_boundaries(spec, 41);
        CHECK(at41.upper_h0 - at40.upper_h0 == doctest::Approx(ps).epsilon(1e-10));
        CHECK(at41.lower_h1 - at40.lower_h1 == doctest::Approx(ps).epsilon(1e-10));
    }
}

TEST_CASE("power function reproduces the nominal error rates") {
    const SequentialSpec sprt = SequentialSpec::sprt();
    const SequentialSpec sapt = SequentialSpec::sapt();

    // With A = beta/(1-alpha), B = (1-beta)/alpha the crossing identity gives
    // exactly alpha at p0 and 1 - beta at p1.
    CHECK(power_function(0.06, sprt) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(power_function(0.04, sprt) == doctest::Approx(0.80).epsilon(1e-9));
    // With B = 1/A the same identity collapses to A/(1+A) and 1/(1+A).
    CHECK(power_function(0.06, sapt) ==
          doctest::Approx(1.0 / 11.0).epsilon(1e-9));
    CHECK(power_function(0.04, sapt) ==
          doctest::Approx(10.0 / 11.0).epsilon(1e-9));

    CHECK(power_function(0.0, sprt) == 1.0);
    CHECK(power_function(1.0, sprt) == 0.0);

    // Continuity limit -log A / (log B - log A) at the singular point.
    const double ps = singular_p(0.06, 0.04);
    CHECK(power_function(ps, sprt) ==
          doctest::Approx(0.35978770698071455).epsilon(1e-9));
    CHECK(power_function(ps, sapt) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(power_function(ps - 1e-9, sprt) ==
          doctest::Approx(power_function(ps + 1e-9, sprt)).epsilon(1e-5));

    // Larger p means more exceedances, a smaller likelihood ratio, and a
    // smaller chance of declaring importance.
    for (const SequentialSpec& spec : {sprt, sapt}) {
        double prev = 1.0;
        for (int i = 1; i <= 1000; ++i) {
            const double L = power_function(i / 1000.0, spec);
            CHECK(L <= prev + 1e-12);
            prev = L;
        }
    }
}

TEST_CASE("expected permutations match the crossing-cost identity") {
    const SequentialSpec sprt = SequentialSpec::sprt();
    const SequentialSpec sapt = SequentialSpec::sapt();

    // Endpoint limits log(B)/log(b) and log(A)/log(a).
    CHECK(expected_permutations(0.0, sprt) ==
          doctest::Approx(131.69309997191604).epsilon(1e-10));
    CHECK(expected_permutations(1.0, sprt) ==
          doctest::Approx(3.8428574663714077).epsilon(1e-10));
    CHECK(expected_permutations(0.0, sapt) ==
          doctest::Approx(109.36875217487952).epsilon(1e-10));
    CHECK(expected_permutations(1.0, sapt) ==
          doctest::Approx(5.678873587267572).epsilon(1e-10));

    // Closed-form values at the design points (k = +-1 makes the crossing
    // probability, and with it the whole expression, exact).
    CHECK(expected_permutations(0.06, sprt) ==
          doctest::Approx(295.65802209610627).epsilon(1e-9));
    CHECK(expected_permutations(0.04, sprt) ==
          doctest::Approx(477.4856844519464).epsilon(1e-9));
    CHECK(expected_permutations(0.06, sapt) ==
          doctest::Approx(415.1734345078078).epsilon(1e-9));
    CHECK(expected_permutations(0.04, sapt) ==
          doctest::Approx(471.84815249887583).epsilon(1e-9));

    // The 0/0 patch at the singular point stays on the smooth curve through
    // its neighbors.
    const double ps = singular_p(0.06, 0.04);
    for (const SequentialSpec& spec : {sprt, sapt}) {
        const double mid = expected_permutations(ps, spec);
        const double lo = expected_permutations(ps - 1e-5, spec);
        const double hi = expected_permutations(ps + 1e-5, spec);
        CHECK(mid == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-6));
        CHECK(mid > 300.0);
        CHECK(mid < 800.0);
    }
}

TEST_CASE("integral characteristics hit their quadrature references") {
    const SequentialSpec sprt = SequentialSpec::sprt();
    const SequentialSpec sapt = SequentialSpec::sapt();
    // References from a 2 * 10^5 panel quadrature of the same closed forms.
    CHECK(effective_alpha(sprt) ==
          doctest::Approx(0.04653885466606404).epsilon(1e-6));
    CHECK(effective_alpha(sapt) ==
          doctest::Approx(0.049755401670744354).epsilon(1e-6));
    CHECK(average_expected_permutations(sprt) ==
          doctest::Approx(35.35864910422838).epsilon(1e-5));
    CHECK(average_expected_permutations(sapt) ==
          doctest::Approx(43.579533997294234).epsilon(1e-5));
}

TEST_CASE("sequential p-value cost formula tracks the exact mixture mean") {
    CHECK(pval_expected_m(8, 500) ==
          doctest::Approx(40.604331482072034).epsilon(1e-12));
    CHECK(pval_expected_m(10, 500) ==
          doctest::Approx(48.64232341591797).epsilon(1e-12));
    CHECK(pval_expected_m(20, 500) ==
          doctest::Approx(83.90365425221826).epsilon(1e-12));

    // The logarithmic formula sits a hair above the exact harmonic value and
    // converges to it as h grows.
    for (int h : {8, 10, 20, 50}) {
        const double diff = pval_expected_m(h, 500) - harmonic_expected_m(h, 500);
        CHECK(diff > 0.0);
        CHECK(diff < 0.005);
    }
    for (int h : {1, 2, 4})
        CHECK(std::abs(pval_expected_m(h, 500) - harmonic_expected_m(h, 500)) <
              0.05);

    // h = M stops at exactly M.
    CHECK(pval_expected_m(17, 17) == doctest::Approx(17.0).epsilon(1e-12));

    CHECK(pval_se_fraction(8) ==
          doctest::Approx(0.35355339059327373).epsilon(1e-12));
    CHECK(pval_se_fraction(10) ==
          doctest::Approx(0.31622776601683794).epsilon(1e-12));
    CHECK(pval_se_fraction(20) ==
          doctest::Approx(0.22360679774997896).epsilon(1e-12));
    CHECK(pval_se_fraction(1) == 1.0);

    CHECK_THROWS_AS(pval_expected_m(0, 500), ConfigError);
    CHECK_THROWS_AS(pval_expected_m(501, 500), ConfigError);
    CHECK_THROWS_AS(pval_se_fraction(0), ConfigError);
}

TEST_CASE("characteristic grid covers [0,1] with finite interior roots") {
    const SequentialSpec sprt = SequentialSpec::sprt();
    const std::vector<OperatingCharacteristic> grid = characterize_grid(sprt, 200);
    REQUIRE(grid.size() == 201);

    CHECK(grid.front().p == 0.0);
    CHECK(grid.back().p == 1.0);
    CHECK(std::isnan(grid.front().k));
    CHECK(std::isnan(grid.back().k));
    CHECK(grid.front().L_p == 1.0);
    CHECK(grid.back().L_p == 0.0);
    CHECK(grid.front().E_m == doctest::Approx(131.69309997191604).epsilon(1e-9));

    double peak_p = 0.0, peak_e = 0.0;
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        CHECK(grid[i].p == doctest::Approx(i / 200.0).epsilon(1e-12));
        CHECK(std::isfinite(grid[i].k));
        CHECK(grid[i].L_p <= grid[i - 1].L_p + 1e-12);
        CHECK(grid[i].E_m > 0.0);
        if (grid[i].E_m > peak_e) {
            peak_e = grid[i].E_m;
            peak_p = grid[i].p;
        }
    }
    // Cost peaks between the hypotheses, near the boundary slope.
    CHECK(peak_p > 0.03);
    CHECK(peak_p < 0.07);

    CHECK_THROWS_AS(characterize_grid(sprt, 1), ConfigError);
    CHECK_THROWS_AS(characterize_grid(SequentialSpec::pval(), 100),
                    std::logic_error);
}

TEST_CASE("boundary table lists the acceptance corridor per stage") {
    const SequentialSpec sapt = SequentialSpec::sapt();
    std::ostringstream out;
    write_boundary_table(out, sapt);
    const std::vector<std::string> lines = lines_of(out.str());
    REQUIRE(lines.size() == 501);  // header + m = 1..500
    CHECK(lines[0] == "m,lower_H1,upper_H0");

    // The H1 bound rises through zero between stages 109 and 110: the first
    // stage at which an exceedance-free stream can stop early.
    const BoundaryRow r109 = parse_boundary_row(lines[109]);
    const BoundaryRow r110 = parse_boundary_row(lines[110]);
    CHECK(r109.m == 109);
    CHECK(r109.lower_h1 < 0.0);
    CHECK(r110.lower_h1 >= 0.0);
    // Consecutive bounds climb at the singular probability (tolerance covers
    // the 6-significant-digit table rounding).
    CHECK(r110.upper_h0 - r109.upper_h0 ==
          doctest::Approx(singular_p(0.06, 0.04)).epsilon(0.005));

    std::ostringstream sprt_out;
    write_boundary_table(sprt_out, SequentialSpec::sprt(), 132);
    const std::vector<std::string> sprt_lines = lines_of(sprt_out.str());
    REQUIRE(sprt_lines.size() == 133);
    CHECK(parse_boundary_row(sprt_lines[131]).lower_h1 < 0.0);
    CHECK(parse_boundary_row(sprt_lines[132]).lower_h1 >= 0.0);
}

TEST_CASE("characteristic table mirrors the grid rows") {
    const SequentialSpec sprt = SequentialSpec::sprt();
    const std::vector<OperatingCharacteristic> grid = characterize_grid(sprt, 10);
    std::ostringstream out;
    write_characteristic_table(out, grid);
    const std::vector<std::string> lines = lines_of(out.str());
    REQUIRE(lines.size() == grid.size() + 1);
    CHECK(lines[0] == "p,k,L_p,E_m");
    for (std::size_t i = 1; i < lines.size(); ++i)
        CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 3);
    // Endpoint roots serialize as nan without breaking the row shape.
    CHECK(lines[1].substr(0, 6) == "0,nan,");
}

TEST_CASE("characteristics are defined only for likelihood-ratio regimes") {
    for (const SequentialSpec& spec :
         {SequentialSpec::pval(), SequentialSpec::certain(),
          SequentialSpec::complete()}) {
        CHECK_THROWS_AS(power_function(0.5, spec), std::logic_error);
        CHECK_THROWS_AS(expected_permutations(0.5, spec), std::logic_error);
        CHECK_THROWS_AS(effective_alpha(spec), std::logic_error);
        CHECK_THROWS_AS(average_expected_permutations(spec), std::logic_error);
    }
    CHECK_THROWS_AS(power_function(-0.1, SequentialSpec::sprt()),
                    std::logic_error);
    CHECK_THROWS_AS(power_function(1.5, SequentialSpec::sprt()),
                    std::logic_error);
}

TEST_CASE("open-ended replays track the crossing probabilities") {
    // The crossing formulas ignore that the log likelihood ratio jumps past
    // the thresholds in discrete steps, so replays agree to Monte Carlo
    // precision away from the boundary slope but sit a measured ~+0.01..0.025
    // above L_p near it (the overshoot always favors the H1 threshold here).
    // Tolerances reflect those two regimes; 6-seed probes put the near-slope
    // deviation at +2.5..+6.8 binomial SEs, stable in sign and size.
    for (const SequentialSpec& base :
         {SequentialSpec::sprt(), SequentialSpec::sapt()}) {
        const SequentialSpec spec = uncapped(base);
        for (double p : {0.01, 0.06, 0.10}) {
            const ReplaySummary mc = replay_at(spec, p, kReps, kSeed);
            const double L = power_function(p, base);
            const double se = std::sqrt(L * (1.0 - L) / kReps);
            CHECK(std::abs(mc.h1_rate - L) <= std::max(3.5 * se, 0.002));
            CHECK(mc.mean_m ==
                  doctest::Approx(expected_permutations(p, base)).epsilon(0.14));
        }
        for (double p : {0.04, 0.05}) {
            const ReplaySummary mc = replay_at(spec, p, kReps, kSeed);
            const double L = power_function(p, base);
            const double se = std::sqrt(L * (1.0 - L) / kReps);
            CHECK(mc.h1_rate - L < 0.045);       // bounded overshoot bias
            CHECK(mc.h1_rate - L > -3.5 * se);   // never pessimistic
            CHECK(mc.mean_m ==
                  doctest::Approx(expected_permutations(p, base)).epsilon(0.14));
        }
    }
}

TEST_CASE("uniform mixture realizes the integral level and cost") {
    for (const SequentialSpec& base :
         {SequentialSpec::sprt(), SequentialSpec::sapt()}) {
        const double level = effective_alpha(base);
        const double cost = average_expected_permutations(base);
        const double se = std::sqrt(level * (1.0 - level) / kReps);

        // Open-ended replays estimate exactly the integrated quantities.
        const ReplaySummary open = replay_uniform_mixture(uncapped(base), kReps,
                                                          kSeed);
        CHECK(std::abs(open.h1_rate - level) <= 3.5 * se);
        CHECK(open.mean_m == doctest::Approx(cost).epsilon(0.15));

        // The shipped cap at M = 500 leaves the average cost in the same
        // +-10% corridor (truncation only trims the long right tail).
        const ReplaySummary capped = replay_uniform_mixture(base, kReps, kSeed);
        CHECK(capped.mean_m == doctest::Approx(cost).epsilon(0.10));
    }

    // The h-exceedance stopper's mixture cost lands on the formula value.
    const ReplaySummary pval =
        replay_uniform_mixture(SequentialSpec::pval(), kReps, kSeed);
    CHECK(std::abs(pval.mean_m - pval_expected_m(8, 500)) < 2.5);
    CHECK(std::abs(pval.mean_m - harmonic_expected_m(8, 500)) < 2.5);
}
