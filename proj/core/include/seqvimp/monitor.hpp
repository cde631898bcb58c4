#pragma once

#include <string>
#include <vector>

#include "seqvimp/errors.hpp"

namespace seqvimp {

enum class Method { Sprt, Sapt, Pval, Certain, Complete };
enum class Decision { Continue, AcceptH0, AcceptH1, PvalueReady };

std::string to_string(Method method);
std::string to_string(Decision decision);
Method parse_method(const std::string& name);

// Parameters of one sequential stopping regime over a stream of exceedance
// indicators.  The tested hypotheses are H0: p = p0 versus H1: p = p1 with
// p1 < p0, where p is the probability that a permutation statistic reaches
// the observed one.  A and B are the likelihood-ratio thresholds for
// accepting H0 and H1, M caps the number of permutations, h is the
// exceedance count at which sequential p-value estimation stops early.
struct SequentialSpec {
    Method method = Method::Sprt;
    double p0 = 0.06;
    double p1 = 0.04;
    double alpha = 0.05;
    double beta = 0.2;
    double A = 0.2 / 0.95;  // beta / (1 - alpha) for the defaults above
    double B = 0.8 / 0.05;  // (1 - beta) / alpha
    int M = 500;
    int h = 8;

    // A and B are derived from (alpha, beta) for SPRT and from B = 1/A for
    // SAPT; use these factories instead of filling the fields by hand.
    static SequentialSpec sprt(double p0 = 0.06, double p1 = 0.04,
                               double alpha = 0.05, double beta = 0.2,
                               int M = 500);
    static SequentialSpec sapt(double p0 = 0.06, double p1 = 0.04,
                               double A = 0.1, int M = 500);
    static SequentialSpec pval(int h = 8, int M = 500, double alpha = 0.05);
    static SequentialSpec certain(double alpha = 0.05, int M = 500);
    static SequentialSpec complete(double alpha = 0.05, int M = 500);

    void validate() const;  // throws ConfigError on any inconsistency
    // Non-fatal advisories, e.g. SAPT with alpha far from (p0 + p1) / 2.
    std::vector<std::string> warnings() const;
};

// Running state of one monitored test.
struct MonitorState {
    int m = 0;                     // permutations consumed
    int d = 0;                     // exceedances among them
    std::vector<bool> trajectory;  // exceedance indicator per step
    Decision decision = Decision::Continue;
};

struct DecisionBounds {
    double upper_h0 = 0;  // accept H0 once d >= upper_h0
    double lower_h1 = 0;  // accept H1 once d <= lower_h1
};

// Linear acceptance bounds of the likelihood-ratio regimes at stage m.
// Valid for methods Sprt and Sapt only.
DecisionBounds sprt_boundaries(const SequentialSpec& spec, int m);

// Early decision for a permutation test capped at M: accept H0 as soon as
// d/M > alpha (the rejection threshold is already missed), accept H1 as soon
// as (d + (M - m))/M <= alpha (it cannot be missed any more).
Decision certain_stop(const MonitorState& state, int M, double alpha);

// Appends one exceedance indicator and applies the spec's stopping rule.
// The boundary rules apply at stages m < M; a run that reaches m = M without
// a decision falls back to the full-sample rule d/M <= alpha.  Stepping a
// terminal state is a usage error (std::logic_error).
MonitorState monitor_step(MonitorState state, bool exceeded,
                          const SequentialSpec& spec);

// Sequential p-value estimate at a Pval stop: d/m when the exceedance cap h
// was reached at m <= M, otherwise (d + 1)/(M + 1) at m = M.
double pval_estimate(const MonitorState& state, const SequentialSpec& spec);

// The values the early-stopped sequential p-value ranges over,
// {1, h/(h+1), ..., h/M, (h-1)/M, ..., 1/M}, in descending order.
std::vector<double> pval_support(int h, int M);

// Fixed-M permutation p-value d/M; requires a full-length run.
double complete_pvalue(const MonitorState& state, const SequentialSpec& spec);

// Stepwise runner for one spec with the boundary lines precomputed.
class Monitor {
public:
    explicit Monitor(const SequentialSpec& spec);

    const SequentialSpec& spec() const { return spec_; }
    const MonitorState& state() const { return state_; }
    bool done() const { return state_.decision != Decision::Continue; }

    Decision step(bool exceeded);
    void reset();

private:
    SequentialSpec spec_;
    MonitorState state_;
    // Boundary lines intercept/slope so stepping needs no logarithms.
    double upper0_ = 0;
    double lower0_ = 0;
    double slope_ = 0;
};

// Feeds a recorded exceedance sequence to a fresh monitor, stopping at the
// first terminal decision; used to derive one regime's outcome from another
// regime's full-length trajectory.
MonitorState replay_trajectory(const SequentialSpec& spec,
                               const std::vector<bool>& trajectory);

}  // namespace seqvimp
