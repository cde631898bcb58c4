#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "seqvimp/dataset.hpp"
#include "seqvimp/forest.hpp"
#include "seqvimp/monitor.hpp"
#include "seqvimp/vimp_tests.hpp"

namespace seqvimp {

// Logistic classification benchmark: six predictors x1..x6 jointly normal
// with unit variances, Cov(x2,x4) = Cov(x3,x5) = 0.5, zeros elsewhere, and
// a binary target with P(y=1) = logistic(k*x1 + k*x2 + k*x3 + x4).  k moves
// x1..x3 from pure noise (k=0) to strong signals (k=1) on an eighth grid.
struct StudyISpec {
    double k = 0;
    int n = 100;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError off the grid or n < 1
};

double logistic(double z);
std::array<double, 6> study1_beta(double k);
// Lower-triangular factor L with L L^T equal to the covariance above.
std::array<std::array<double, 6>, 6> study1_covariance_factor();

Dataset gen_study1(const StudyISpec& spec, std::mt19937_64& rng);

// Friedman regression benchmark: ten predictors i.i.d. Uniform(0,1), five
// informative through friedman_mean, five pure noise, unit normal errors.
double friedman_mean(const std::array<double, 10>& x);
Dataset gen_study2(int n, std::mt19937_64& rng);

// One summary row of a simulation run: how often one stopping regime
// accepted H1 for one variable, and what it cost.  `replicates` counts the
// replicates that produced a result; `failures` the ones excluded because
// the test threw.
struct ExperimentSummary {
    int variable = -1;
    std::string variable_name;
    std::string method;
    double rejection_frequency = 0;
    double avg_permutations = 0;
    int replicates = 0;
    int failures = 0;
};

using DatasetGenerator = std::function<Dataset(std::mt19937_64&)>;

// Runs `replicates` independent datasets through the sequential tests and
// aggregates one ExperimentSummary per (variable, spec), specs varying
// fastest.  Within one replicate a variable's exceedance stream is computed
// once and every spec's decision is derived from that shared stream, the
// stream being extended only as far as the longest-running spec needs.
// Replicates run data-parallel on derived seeds; the aggregation does not
// depend on completion order or worker count.  A replicate that throws for
// a variable is excluded from that variable's summaries and counted in
// `failures`.
std::vector<ExperimentSummary> run_experiment(
    const DatasetGenerator& generator, int replicates,
    const ForestConfig& fcfg, const std::vector<SequentialSpec>& specs,
    TestKind kind, const std::vector<std::string>& variables,
    std::mt19937_64& rng);

// Everything needed to reproduce one simulation run.
struct ExperimentManifest {
    std::string study;  // "study1" or "study2"
    double k = 0;       // study1 effect size; 0 for study2
    int n = 0;
    int replicates = 0;
    TestKind kind = TestKind::General;
    ForestConfig forest;
    std::vector<SequentialSpec> specs;
    std::vector<std::string> variables;
    std::uint64_t seed = 0;
};

// Flat summary table keyed by (study, variable, method, k).
void write_summary_csv(std::ostream& out, const ExperimentManifest& manifest,
                       const std::vector<ExperimentSummary>& rows);

// JSON record of the full configuration, seed included, so every number in
// the summary can be regenerated from the manifest alone.
void write_manifest_json(std::ostream& out,
                         const ExperimentManifest& manifest);

}  // namespace seqvimp
