#include "seqvimp/simbench.hpp"

#include <cmath>
#include <ostream>
#include <utility>

#include "json.hpp"
#include "parallel_util.hpp"
#include "seqvimp/errors.hpp"
#include "seqvimp/rng.hpp"

namespace seqvimp {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::array<std::array<double, 6>, 6> study1_covariance() {
    std::array<std::array<double, 6>, 6> cov{};
    for (int i = 0; i < 6; ++i) cov[i][i] = 1.0;
    cov[1][3] = cov[3][1] = 0.5;  // x2 with x4
    cov[2][4] = cov[4][2] = 0.5;  // x3 with x5
    return cov;
}

std::array<std::array<double, 6>, 6> cholesky6(
    const std::array<std::array<double, 6>, 6>& a) {
    std::array<std::array<double, 6>, 6> l{};
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[i][j];
            for (int k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
            if (i == j) {
                if (sum <= 0)
                    throw NumericError("covariance not positive definite");
                l[i][i] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    return l;
}

}  // namespace

void StudyISpec::validate() const {
    if (!(k >= 0 && k <= 1))
        throw ConfigError("effect size k must lie in [0, 1]");
    const double steps = k * 8;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ConfigError("effect size k must be a multiple of 0.125");
    if (n < 1) throw ConfigError("sample size must be >= 1");
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::array<double, 6> study1_beta(double k) { return {k, k, k, 1.0, 0, 0}; }

std::array<std::array<double, 6>, 6> study1_covariance_factor() {
    static const std::array<std::array<double, 6>, 6> factor =
        cholesky6(study1_covariance());
    return factor;
}

Dataset gen_study1(const StudyISpec& spec, std::mt19937_64& rng) {
    spec.validate();
    const std::array<double, 6> beta = study1_beta(spec.k);
    const std::array<std::array<double, 6>, 6> l = study1_covariance_factor();

    std::array<std::vector<double>, 6> x;
    for (auto& col : x) col.reserve(spec.n);
    std::vector<int> y;
    y.reserve(spec.n);

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::array<double, 6> z{};
    for (int row = 0; row < spec.n; ++row) {
        for (double& zi : z) zi = normal(rng);
        double eta = 0;
        for (int i = 0; i < 6; ++i) {
            double xi = 0;
            for (int j = 0; j <= i; ++j) xi += l[i][j] * z[j];
            x[i].push_back(xi);
            eta += beta[i] * xi;
        }
        y.push_back(unit(rng) < logistic(eta) ? 1 : 0);
    }

    Dataset data;
    for (int i = 0; i < 6; ++i)
        data.columns.push_back(
            numeric_column("x" + std::to_string(i + 1), std::move(x[i])));
    data.columns.push_back(categorical_column("y", std::move(y), {"0", "1"}));
    data.target = 6;
    data.validate();
    return data;
}

double friedman_mean(const std::array<double, 10>& x) {
    const double dx3 = x[2] - 0.5;
    return 10.0 * std::sin(kPi * x[0] * x[1]) + 20.0 * dx3 * dx3 +
           10.0 * x[3] + 5.0 * x[4];
}

Dataset gen_study2(int n, std::mt19937_64& rng) {
    if (n < 1) throw ConfigError("sample size must be >= 1");

    std::array<std::vector<double>, 10> x;
    for (auto& col : x) col.reserve(n);
    std::vector<double> y;
    y.reserve(n);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::array<double, 10> row_x{};
    for (int row = 0; row < n; ++row) {
        for (int i = 0; i < 10; ++i) {
            row_x[i] = unit(rng);
            x[i].push_back(row_x[i]);
        }
        y.push_back(friedman_mean(row_x) + normal(rng));
    }

    Dataset data;
    for (int i = 0; i < 10; ++i)
        data.columns.push_back(
            numeric_column("x" + std::to_string(i + 1), std::move(x[i])));
    data.columns.push_back(numeric_column("y", std::move(y)));
    data.target = 10;
    data.validate();
    return data;
}

namespace {

// Per (replicate, variable, spec) outcome, filled in parallel and reduced
// in replicate order afterwards.
struct CellOutcome {
    bool ok = false;
    bool rejected = false;
    int permutations = 0;
};

}  // namespace

std::vector<ExperimentSummary> run_experiment(
    const DatasetGenerator& generator, int replicates,
    const ForestConfig& fcfg, const std::vector<SequentialSpec>& specs,
    TestKind kind, const std::vector<std::string>& variables,
    std::mt19937_64& rng) {
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (specs.empty()) throw ConfigError("no sequential specs given");
    if (variables.empty()) throw ConfigError("no variables of interest");
    for (const SequentialSpec& spec : specs) spec.validate();

    const int n_vars = int(variables.size());
    const int n_specs = int(specs.size());
    const std::uint64_t master = rng();
    std::vector<CellOutcome> outcomes(std::size_t(replicates) * n_vars *
                                      n_specs);

    detail::parallel_for(replicates, [&](int rep) {
        CellOutcome* rep_out =
            outcomes.data() + std::size_t(rep) * n_vars * n_specs;
        Dataset data;
        try {
            std::mt19937_64 data_rng = make_rng(
                derive_seed(master, stream::kData, std::uint64_t(rep)));
            data = generator(data_rng);
        } catch (const std::exception&) {
            return;  // whole replicate excluded for every cell
        }
        for (int v = 0; v < n_vars; ++v) {
            CellOutcome* cells = rep_out + std::size_t(v) * n_specs;
            try {
                const int var = data.column_index(variables[v]);
                if (var < 0)
                    throw DataError("no column named " + variables[v]);
                // The per-test master seed is drawn exactly the way the
                // single-test entry points draw it, so the decisions below
                // are the ones live runs with this stream would produce.
                std::mt19937_64 test_rng = make_rng(derive_seed(
                    master, stream::kExperiment, std::uint64_t(rep),
                    std::uint64_t(v)));
                ExceedanceStream exc(data, var, fcfg, kind, test_rng());

                // One shared exceedance stream, one monitor per spec; the
                // stream is extended only while some monitor still runs.
                std::vector<Monitor> monitors;
                monitors.reserve(n_specs);
                for (const SequentialSpec& spec : specs)
                    monitors.emplace_back(spec);
                int running = n_specs;
                while (running > 0) {
                    const bool exceeded = exc.next();
                    running = 0;
                    for (Monitor& monitor : monitors) {
                        if (monitor.done()) continue;
                        monitor.step(exceeded);
                        if (!monitor.done()) ++running;
                    }
                }
                for (int s = 0; s < n_specs; ++s) {
                    const MonitorState& state = monitors[s].state();
                    cells[s].ok = true;
                    cells[s].rejected =
                        mapped_decision(state, specs[s]) == Decision::AcceptH1;
                    cells[s].permutations = state.m;
                }
            } catch (const std::exception&) {
                for (int s = 0; s < n_specs; ++s) cells[s] = CellOutcome{};
            }
        }
    });

    std::vector<ExperimentSummary> rows;
    rows.reserve(std::size_t(n_vars) * n_specs);
    for (int v = 0; v < n_vars; ++v) {
        for (int s = 0; s < n_specs; ++s) {
            ExperimentSummary row;
            row.variable = v;
            row.variable_name = variables[v];
            row.method = to_string(specs[s].method);
            std::int64_t perms = 0;
            int rejected = 0;
            for (int rep = 0; rep < replicates; ++rep) {
                const CellOutcome& cell =
                    outcomes[(std::size_t(rep) * n_vars + v) * n_specs + s];
                if (!cell.ok) {
                    ++row.failures;
                    continue;
                }
                ++row.replicates;
                perms += cell.permutations;
                rejected += cell.rejected ? 1 : 0;
            }
            if (row.replicates > 0) {
                row.rejection_frequency =
                    double(rejected) / double(row.replicates);
                row.avg_permutations =
                    double(perms) / double(row.replicates);
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_summary_csv(std::ostream& out, const ExperimentManifest& manifest,
                       const std::vector<ExperimentSummary>& rows) {
    out << "study,variable,method,k,n,replicates,failures,"
           "rejection_frequency,avg_permutations\n";
    for (const ExperimentSummary& row : rows) {
        out << manifest.study << ',' << row.variable_name << ',' << row.method
            << ',' << manifest.k << ',' << manifest.n << ','
            << row.replicates << ',' << row.failures << ','
            << row.rejection_frequency << ',' << row.avg_permutations << '\n';
    }
}

void write_manifest_json(std::ostream& out,
                         const ExperimentManifest& manifest) {
    nlohmann::json spec_rows = nlohmann::json::array();
    for (const SequentialSpec& spec : manifest.specs) {
        spec_rows.push_back({{"method", to_string(spec.method)},
                             {"p0", spec.p0},
                             {"p1", spec.p1},
                             {"alpha", spec.alpha},
                             {"beta", spec.beta},
                             {"A", spec.A},
                             {"B", spec.B},
                             {"M", spec.M},
                             {"h", spec.h}});
    }
    nlohmann::json forest = {
        {"ntree", manifest.forest.ntree},
        {"mtry", manifest.forest.mtry},
        {"nperm", manifest.forest.nperm},
        {"min_node_size", manifest.forest.min_node_size},
        {"seed", manifest.forest.seed},
        {"loss", manifest.forest.loss
                     ? nlohmann::json(to_string(*manifest.forest.loss))
                     : nlohmann::json(nullptr)}};
    nlohmann::json doc = {{"study", manifest.study},
                          {"k", manifest.k},
                          {"n", manifest.n},
                          {"replicates", manifest.replicates},
                          {"test", to_string(manifest.kind)},
                          {"forest", std::move(forest)},
                          {"specs", std::move(spec_rows)},
                          {"variables", manifest.variables},
                          {"seed", manifest.seed}};
    out << doc.dump(2) << '\n';
}

}  // namespace seqvimp
