#pragma once

#include <iosfwd>
#include <vector>

#include "seqvimp/monitor.hpp"

namespace seqvimp {

// Operating characteristics of a likelihood-ratio regime at exceedance
// probability p: k is the exponent solving the defining equation below, L_p
// the probability of accepting H1, E_m the expected number of permutations
// until termination.
struct OperatingCharacteristic {
    double p = 0;
    double k = 0;
    double L_p = 0;
    double E_m = 0;
};

// The p at which the nonzero root k collapses to zero and the formulas for
// L_p and E_m become 0/0 limits.
double singular_p(double p0, double p1);

// Nonzero root k of  p (p1/p0)^k + (1-p) ((1-p1)/(1-p0))^k = 1  for
// 0 < p < 1; returns 0 at the singular p where only the zero root exists.
// Bracketed bisection, tolerance 1e-10 in k.
double solve_k(double p, double p0, double p1);

// L_p = (1 - A^k) / (B^k - A^k), with the continuity limit
// -log(A) / (log(B) - log(A)) at k = 0, and limits 1 and 0 at p = 0 and 1.
double power_function(double p, const SequentialSpec& spec);

// E_m(p) = [L_p log(B) + (1 - L_p) log(A)] /
//          [p log(p1/p0) + (1 - p) log((1-p1)/(1-p0))];
// the denominator vanishes at the singular p, where the value is taken as
// the average over symmetric offsets p +- 1e-6.
double expected_permutations(double p, const SequentialSpec& spec);

// Integral of L_p over p in [0,1]: the realized type-I error level when p is
// uniform under H0.  Composite Simpson quadrature with 10^4 panels.
double effective_alpha(const SequentialSpec& spec);

// Integral of E_m(p) over p in [0,1]: the average cost of the regime.
double average_expected_permutations(const SequentialSpec& spec);

// Expected permutations until a sequential p-value stop under H0:
// h + h log((M + 1/2) / (h + 1/2)).
double pval_expected_m(int h, int M);

// Standard error of the sequential p-value as a fraction of p: 1/sqrt(h).
double pval_se_fraction(int h);

// Characteristics on the even grid p = i/points, i = 0..points.  k is NaN at
// the endpoints, where the root diverges but L_p and E_m have finite limits.
std::vector<OperatingCharacteristic> characterize_grid(
    const SequentialSpec& spec, int points = 1000);

// CSV with columns m,lower_H1,upper_H0 for m = 1..m_max (default spec.M).
void write_boundary_table(std::ostream& out, const SequentialSpec& spec,
                          int m_max = 0);

// CSV with columns p,k,L_p,E_m.
void write_characteristic_table(
    std::ostream& out, const std::vector<OperatingCharacteristic>& grid);

}  // namespace seqvimp
