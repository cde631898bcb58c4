#include "seqvimp/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace seqvimp {

namespace {

// Relative tolerance for checking that A and B match their defining
// relations; loose enough to survive round-tripping through text.
constexpr double kRatioTol = 1e-9;

bool close_rel(double a, double b) {
    return std::abs(a - b) <= kRatioTol * std::max({1.0, std::abs(a), std::abs(b)});
}

struct BoundaryLines {
    double upper0, lower0, slope;
};

// d >= upper(m) accepts H0, d <= lower(m) accepts H1, where
//   upper(m) = (log A + m log((1-p0)/(1-p1))) / D,
//   lower(m) = (log B + m log((1-p0)/(1-p1))) / D,
//   D        = log(p1 (1-p0) / (p0 (1-p1))) < 0.
BoundaryLines boundary_lines(const SequentialSpec& s) {
    const double denom = std::log(s.p1 * (1.0 - s.p0) / (s.p0 * (1.0 - s.p1)));
    const double slope = std::log((1.0 - s.p0) / (1.0 - s.p1)) / denom;
    return {std::log(s.A) / denom, std::log(s.B) / denom, slope};
}

Decision decide(const SequentialSpec& spec, int m, int d, double upper,
                double lower) {
    switch (spec.method) {
        case Method::Sprt:
        case Method::Sapt:
            if (m < spec.M) {
                if (d >= upper) return Decision::AcceptH0;
                if (d <= lower) return Decision::AcceptH1;
                return Decision::Continue;
            }
            // No boundary was crossed within the cap; decide like the
            // full-sample test.
            return double(d) / spec.M <= spec.alpha ? Decision::AcceptH1
                                                    : Decision::AcceptH0;
        case Method::Pval:
            if (d == spec.h || m == spec.M) return Decision::PvalueReady;
            return Decision::Continue;
        case Method::Certain:
            if (double(d) / spec.M > spec.alpha) return Decision::AcceptH0;
            if (double(d + (spec.M - m)) / spec.M <= spec.alpha)
                return Decision::AcceptH1;
            return Decision::Continue;
        case Method::Complete:
            if (m < spec.M) return Decision::Continue;
            return double(d) / spec.M <= spec.alpha ? Decision::AcceptH1
                                                    : Decision::AcceptH0;
    }
    throw std::logic_error("unreachable: unknown method");
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::Sprt: return "sprt";
        case Method::Sapt: return "sapt";
        case Method::Pval: return "pval";
        case Method::Certain: return "certain";
        case Method::Complete: return "complete";
    }
    return "unknown";
}

std::string to_string(Decision decision) {
    switch (decision) {
        case Decision::Continue: return "continue";
        case Decision::AcceptH0: return "accept_H0";
        case Decision::AcceptH1: return "accept_H1";
        case Decision::PvalueReady: return "pvalue_ready";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "sprt") return Method::Sprt;
    if (name == "sapt") return Method::Sapt;
    if (name == "pval") return Method::Pval;
    if (name == "certain") return Method::Certain;
    if (name == "complete") return Method::Complete;
    throw ConfigError("unknown method '" + name +
                      "' (expected sprt, sapt, pval, certain or complete)");
}

SequentialSpec SequentialSpec::sprt(double p0, double p1, double alpha,
                                    double beta, int M) {
    SequentialSpec s;
    s.method = Method::Sprt;
    s.p0 = p0;
    s.p1 = p1;
    s.alpha = alpha;
    s.beta = beta;
    s.A = beta / (1.0 - alpha);
    s.B = (1.0 - beta) / alpha;
    s.M = M;
    s.validate();
    return s;
}

SequentialSpec SequentialSpec::sapt(double p0, double p1, double A, int M) {
    SequentialSpec s;
    s.method = Method::Sapt;
    s.p0 = p0;
    s.p1 = p1;
    s.alpha = (p0 + p1) / 2.0;  // the calibrated nominal level
    s.A = A;
    s.B = 1.0 / A;
    s.M = M;
    s.validate();
    return s;
}

SequentialSpec SequentialSpec::pval(int h, int M, double alpha) {
    SequentialSpec s;
    s.method = Method::Pval;
    s.h = h;
    s.M = M;
    s.alpha = alpha;
    s.validate();
    return s;
}

SequentialSpec SequentialSpec::certain(double alpha, int M) {
    SequentialSpec s;
    s.method = Method::Certain;
    s.alpha = alpha;
    s.M = M;
    s.validate();
    return s;
}

SequentialSpec SequentialSpec::complete(double alpha, int M) {
    SequentialSpec s;
    s.method = Method::Complete;
    s.alpha = alpha;
    s.M = M;
    s.validate();
    return s;
}

void SequentialSpec::validate() const {
    std::ostringstream err;
    if (!(0.0 < p1 && p1 < p0 && p0 < 1.0)) {
        err << "require 0 < p1 < p0 < 1, got p0=" << p0 << " p1=" << p1;
        throw ConfigError(err.str());
    }
    if (!(0.0 < alpha && alpha < 1.0)) {
        err << "alpha must be in (0, 1), got " << alpha;
        throw ConfigError(err.str());
    }
    if (!(0.0 < beta && beta < 1.0)) {
        err << "beta must be in (0, 1), got " << beta;
        throw ConfigError(err.str());
    }
    if (M < 1) {
        err << "M must be >= 1, got " << M;
        throw ConfigError(err.str());
    }
    if (method == Method::Pval && !(1 <= h && h <= M)) {
        err << "require 1 <= h <= M, got h=" << h << " M=" << M;
        throw ConfigError(err.str());
    }
    if (method == Method::Sprt || method == Method::Sapt) {
        if (!(A > 0.0 && A < 1.0 && B > 1.0)) {
            err << "require 0 < A < 1 < B, got A=" << A << " B=" << B;
            throw ConfigError(err.str());
        }
        if (method == Method::Sprt &&
            (!close_rel(A, beta / (1.0 - alpha)) ||
             !close_rel(B, (1.0 - beta) / alpha))) {
            err << "SPRT thresholds are derived: A = beta/(1-alpha) and "
                   "B = (1-beta)/alpha; got A=" << A << " B=" << B;
            throw ConfigError(err.str());
        }
        if (method == Method::Sapt && !close_rel(B, 1.0 / A)) {
            err << "SAPT requires B = 1/A, got A=" << A << " B=" << B;
            throw ConfigError(err.str());
        }
    }
}

std::vector<std::string> SequentialSpec::warnings() const {
    std::vector<std::string> out;
    if (method == Method::Sapt) {
        const double mid = (p0 + p1) / 2.0;
        if (std::abs(mid - alpha) > 1e-12) {
            std::ostringstream msg;
            msg << "SAPT is calibrated for alpha = (p0 + p1)/2 = " << mid
                << "; running with alpha = " << alpha;
            out.push_back(msg.str());
        }
    }
    return out;
}

DecisionBounds sprt_boundaries(const SequentialSpec& spec, int m) {
    if (spec.method != Method::Sprt && spec.method != Method::Sapt)
        throw std::logic_error("sprt_boundaries: method has no boundary lines");
    if (m < 1) throw std::logic_error("sprt_boundaries: m must be >= 1");
    spec.validate();
    const BoundaryLines lines = boundary_lines(spec);
    return {lines.upper0 + lines.slope * m, lines.lower0 + lines.slope * m};
}

Decision certain_stop(const MonitorState& state, int M, double alpha) {
    if (state.m > M) throw std::logic_error("certain_stop: state.m exceeds M");
    if (double(state.d) / M > alpha) return Decision::AcceptH0;
    if (double(state.d + (M - state.m)) / M <= alpha) return Decision::AcceptH1;
    return Decision::Continue;
}

MonitorState monitor_step(MonitorState state, bool exceeded,
                          const SequentialSpec& spec) {
    if (state.decision != Decision::Continue)
        throw std::logic_error("monitor_step: state is already terminal");
    if (state.m >= spec.M)
        throw std::logic_error("monitor_step: permutation cap reached");
    state.trajectory.push_back(exceeded);
    state.m += 1;
    state.d += exceeded ? 1 : 0;
    double upper = 0, lower = 0;
    if (spec.method == Method::Sprt || spec.method == Method::Sapt) {
        const DecisionBounds b = sprt_boundaries(spec, state.m);
        upper = b.upper_h0;
        lower = b.lower_h1;
    }
    state.decision = decide(spec, state.m, state.d, upper, lower);
    return state;
}

double pval_estimate(const MonitorState& state, const SequentialSpec& spec) {
    if (state.d == spec.h && state.m <= spec.M)
        return double(state.d) / state.m;
    if (state.m == spec.M && state.d < spec.h)
        return double(state.d + 1) / (spec.M + 1);
    throw std::logic_error("pval_estimate: state is not a p-value stop");
}

std::vector<double> pval_support(int h, int M) {
    if (!(1 <= h && h <= M))
        throw ConfigError("pval_support: require 1 <= h <= M");
    std::vector<double> support;
    support.reserve(M);
    for (int m = h; m <= M; ++m) support.push_back(double(h) / m);
    for (int d = h - 1; d >= 1; --d) support.push_back(double(d) / M);
    return support;
}

double complete_pvalue(const MonitorState& state, const SequentialSpec& spec) {
    if (state.m != spec.M)
        throw std::logic_error("complete_pvalue: run is not full length");
    return double(state.d) / spec.M;
}

Monitor::Monitor(const SequentialSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.method == Method::Sprt || spec_.method == Method::Sapt) {
        const BoundaryLines lines = boundary_lines(spec_);
        upper0_ = lines.upper0;
        lower0_ = lines.lower0;
        slope_ = lines.slope;
    }
    state_.trajectory.reserve(spec_.M);
}

Decision Monitor::step(bool exceeded) {
    if (done()) throw std::logic_error("Monitor::step: already terminal");
    if (state_.m >= spec_.M)
        throw std::logic_error("Monitor::step: permutation cap reached");
    state_.trajectory.push_back(exceeded);
    state_.m += 1;
    state_.d += exceeded ? 1 : 0;
    const double upper = upper0_ + slope_ * state_.m;
    const double lower = lower0_ + slope_ * state_.m;
    state_.decision = decide(spec_, state_.m, state_.d, upper, lower);
    return state_.decision;
}

void Monitor::reset() {
    state_ = MonitorState{};
    state_.trajectory.reserve(spec_.M);
}

MonitorState replay_trajectory(const SequentialSpec& spec,
                               const std::vector<bool>& trajectory) {
    Monitor monitor(spec);
    for (bool exceeded : trajectory) {
        if (monitor.done()) break;
        monitor.step(exceeded);
    }
    return monitor.state();
}

}  // namespace seqvimp
