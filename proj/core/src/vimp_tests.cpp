#include "seqvimp/vimp_tests.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "parallel_util.hpp"
#include "seqvimp/errors.hpp"
#include "seqvimp/rng.hpp"

namespace seqvimp {

namespace {

// Every random ingredient of one stream step hangs off this: the caller's
// master seed, the variable under test, and the step number (0 is the
// observed-data fit).  Role seeds are derived one level further down.
std::uint64_t step_seed(std::uint64_t master, int variable, int step) {
    return derive_seed(master, stream::kRefit, std::uint64_t(variable),
                       std::uint64_t(step));
}

double forest_importance(const Dataset& data, int variable,
                         const ForestConfig& config, std::uint64_t it_seed) {
    ForestConfig fit = config;
    fit.seed = derive_seed(it_seed, stream::kForest);
    const ForestModel model = fit_forest(data, fit);
    std::mt19937_64 vimp_rng = make_rng(derive_seed(it_seed, stream::kPermute));
    return forest_vimp(model, variable, data, fit.nperm, vimp_rng).vimp;
}

}  // namespace

std::string to_string(TestKind kind) {
    return kind == TestKind::General ? "general" : "two-sample";
}

TestKind parse_test_kind(const std::string& name) {
    if (name == "general") return TestKind::General;
    if (name == "two-sample" || name == "two_sample")
        return TestKind::TwoSample;
    throw ConfigError("unknown test kind: " + name);
}

ExceedanceStream::ExceedanceStream(const Dataset& data, int variable,
                                   const ForestConfig& config, TestKind kind,
                                   std::uint64_t master)
    : kind_(kind), variable_(variable), master_(master) {
    if (variable < 0 || variable >= int(data.columns.size()) ||
        variable == data.target)
        throw ConfigError("not a predictor column: " +
                          std::to_string(variable));

    if (kind_ == TestKind::General) {
        data_ = data;
        config_ = config;
        const Column& col = data_.columns[variable_];
        original_numeric_ = col.numeric;
        original_codes_ = col.codes;
        u_ = forest_importance(data_, variable_, config_,
                               step_seed(master_, variable_, 0));
        return;
    }

    // Two-sample: one forest on the data as given, one on a copy whose
    // tested column is permuted once; per-tree importances of both pool
    // into the resampling population.
    const std::uint64_t seed0 = step_seed(master_, variable_, 0);
    Dataset permuted = data;
    std::mt19937_64 shuffle_rng =
        make_rng(derive_seed(seed0, stream::kData));
    shuffle_column(permuted, variable_, shuffle_rng);

    ForestConfig fit = config;
    fit.seed = derive_seed(seed0, stream::kForest);
    const ForestModel intact = fit_forest(data, fit);
    fit.seed = derive_seed(seed0, stream::kForest, 1);
    const ForestModel shuffled = fit_forest(permuted, fit);

    std::mt19937_64 vimp_rng = make_rng(derive_seed(seed0, stream::kPermute));
    const VimpReport vi_intact =
        forest_vimp(intact, variable_, data, fit.nperm, vimp_rng);
    const VimpReport vi_shuffled =
        forest_vimp(shuffled, variable_, permuted, fit.nperm, vimp_rng);

    // Trees with an empty out-of-bag set have no importance; they drop out
    // of the pool and the draw size shrinks to the surviving original count.
    u_ = vi_intact.vimp;
    for (double vi : vi_intact.per_tree_vi) {
        if (std::isnan(vi)) continue;
        pool_.push_back(vi);
        ++draw_size_;
    }
    for (double vi : vi_shuffled.per_tree_vi)
        if (!std::isnan(vi)) pool_.push_back(vi);
}

bool ExceedanceStream::next() {
    ++steps_;
    return kind_ == TestKind::General ? next_general() : next_two_sample();
}

bool ExceedanceStream::next_general() {
    const std::uint64_t it_seed = step_seed(master_, variable_, steps_);
    Column& col = data_.columns[variable_];
    // Permute the original column, not the previous step's arrangement, so
    // each step's dataset is a pure function of (data, master, step).
    col.numeric = original_numeric_;
    col.codes = original_codes_;
    std::mt19937_64 shuffle_rng = make_rng(derive_seed(it_seed, stream::kData));
    shuffle_column(data_, variable_, shuffle_rng);
    const double u_s = forest_importance(data_, variable_, config_, it_seed);
    return u_s >= u_;
}

bool ExceedanceStream::next_two_sample() {
    const std::uint64_t it_seed = step_seed(master_, variable_, steps_);
    std::mt19937_64 draw_rng = make_rng(derive_seed(it_seed, stream::kData));
    const int n = int(pool_.size());
    draw_scratch_.resize(n);
    for (int i = 0; i < n; ++i) draw_scratch_[i] = i;
    for (int i = 0; i < draw_size_; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(draw_scratch_[i], draw_scratch_[pick(draw_rng)]);
    }
    // Sum the drawn values in index order so the mean does not depend on
    // the order the draw happened to produce them in.
    std::sort(draw_scratch_.begin(), draw_scratch_.begin() + draw_size_);
    double sum = 0;
    for (int i = 0; i < draw_size_; ++i) sum += pool_[draw_scratch_[i]];
    return sum / draw_size_ >= u_;
}

Decision mapped_decision(const MonitorState& state,
                         const SequentialSpec& spec) {
    if (spec.method == Method::Pval)
        return pval_estimate(state, spec) <= spec.alpha ? Decision::AcceptH1
                                                        : Decision::AcceptH0;
    return state.decision;
}

namespace {

VariableTestReport run_stream_test(const Dataset& data, int variable,
                                   const ForestConfig& config,
                                   const SequentialSpec& spec, TestKind kind,
                                   std::mt19937_64& rng) {
    spec.validate();
    const std::uint64_t master = rng();
    ExceedanceStream exc(data, variable, config, kind, master);
    Monitor monitor(spec);
    while (!monitor.done()) monitor.step(exc.next());

    VariableTestReport report;
    report.variable = variable;
    report.name = data.columns[variable].name;
    report.spec = spec;
    report.u = exc.u();
    report.permutations_used = monitor.state().m;
    report.trajectory = monitor.state().trajectory;
    report.decision = mapped_decision(monitor.state(), spec);
    if (spec.method == Method::Pval)
        report.p_value = pval_estimate(monitor.state(), spec);
    else if (spec.method == Method::Complete)
        report.p_value = complete_pvalue(monitor.state(), spec);
    return report;
}

}  // namespace

VariableTestReport general_test(const Dataset& data, int variable,
                                const ForestConfig& config,
                                const SequentialSpec& spec,
                                std::mt19937_64& rng) {
    return run_stream_test(data, variable, config, spec, TestKind::General,
                           rng);
}

VariableTestReport two_sample_test(const Dataset& data, int variable,
                                   const ForestConfig& config,
                                   const SequentialSpec& spec,
                                   std::mt19937_64& rng) {
    return run_stream_test(data, variable, config, spec, TestKind::TwoSample,
                           rng);
}

std::vector<VariableTestReport> test_all_variables(const Dataset& data,
                                                   const ForestConfig& config,
                                                   const SequentialSpec& spec,
                                                   TestKind kind,
                                                   std::mt19937_64& rng) {
    data.validate();
    spec.validate();
    resolve_config(config, data);  // reject bad configs before spawning work
    const std::vector<int> variables = data.predictor_indices();
    const std::uint64_t master = rng();
    std::vector<VariableTestReport> reports(variables.size());
    detail::parallel_for(int(variables.size()), [&](int v) {
        std::mt19937_64 var_rng = make_rng(
            derive_seed(master, stream::kExperiment, std::uint64_t(v)));
        try {
            reports[v] = run_stream_test(data, variables[v], config, spec,
                                         kind, var_rng);
        } catch (const std::exception& ex) {
            reports[v] = VariableTestReport{};
            reports[v].variable = variables[v];
            reports[v].name = data.columns[variables[v]].name;
            reports[v].spec = spec;
            reports[v].error = ex.what();
        }
    });
    return reports;
}

int total_permutations(const std::vector<VariableTestReport>& reports) {
    int total = 0;
    for (const VariableTestReport& r : reports)
        if (r.error.empty()) total += r.permutations_used;
    return total;
}

void write_reports_json(std::ostream& out,
                        const std::vector<VariableTestReport>& reports) {
    nlohmann::json array = nlohmann::json::array();
    for (const VariableTestReport& r : reports) {
        nlohmann::json obj;
        obj["name"] = r.name;
        if (r.error.empty()) {
            obj["u"] = r.u;
            obj["decision"] = to_string(r.decision);
            obj["p_value"] = r.p_value ? nlohmann::json(*r.p_value)
                                       : nlohmann::json(nullptr);
            obj["permutations_used"] = r.permutations_used;
        } else {
            obj["error"] = r.error;
        }
        array.push_back(std::move(obj));
    }
    out << array.dump(2) << '\n';
}

void write_reports_csv(std::ostream& out,
                       const std::vector<VariableTestReport>& reports) {
    out << "name,u,decision,p_value,permutations_used,trajectory\n";
    for (const VariableTestReport& r : reports) {
        if (!r.error.empty()) {
            std::string flat = r.error;
            std::replace(flat.begin(), flat.end(), ',', ';');
            std::replace(flat.begin(), flat.end(), '\n', ' ');
            out << r.name << ",,error: " << flat << ",,,\n";
            continue;
        }
        out << r.name << ',' << r.u << ',' << to_string(r.decision) << ',';
        if (r.p_value) out << *r.p_value;
        out << ',' << r.permutations_used << ',';
        for (bool b : r.trajectory) out << (b ? '1' : '0');
        out << '\n';
    }
}

}  // namespace seqvimp
