#include "postgl/selftest.hpp"

#include <chrono>
#include <iomanip>

#include "postgl/errors.hpp"

namespace postgl {

namespace {

CheckResult check_penalty(const SelftestOptions& opts, std::uint64_t seed) {
    CheckResult res{"penalty_positive"};
    std::mt19937_64 rng(seed);
    InstanceOptions o;
    auto inst = random_instance(o, rng);
    if (!inst) {
        res.pass = false;
        res.detail = "could not generate an instance";
        return res;
    }
    Penalty pen = inst->penalty;
    if (opts.inject_negative_lambda) pen.lambda(0) = -std::abs(pen.lambda(0));
    res.instances = 1;
    try {
        pen.validate(inst->groups);
        // The solver must refuse the same penalty on its own.
        solve_group_lasso(inst->model, inst->ds, inst->groups, pen, inst->rand);
    } catch (const ConfigError& e) {
        res.pass = false;
        res.detail = e.what();
    }
    return res;
}

void print(std::ostream& out, const CheckResult& c) {
    out << (c.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(24) << c.name << " instances=" << std::setw(4)
        << c.instances << " worst=" << std::setw(12) << std::setprecision(4) << c.worst << " tol=" << c.tolerance;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << "\n";
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& opts, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckResult> all;
    BoundTally tally;
    auto take = [&](std::vector<CheckResult> v) {
        for (auto& c : v) {
            print(out, c);
            all.push_back(std::move(c));
        }
    };
    take({check_penalty(opts, opts.seed)});
    take(check_kkt(40, opts.seed + 1, &tally));
    take(check_jacobian(20, opts.seed + 2, &tally));
    take({check_shortcut(20, opts.seed + 3, &tally)});
    take(check_mle_oracle(6, opts.seed + 4, &tally));

    CheckResult bound{"fisher_inverse_bound"};
    bound.instances = tally.checked;
    bound.worst = tally.worst_ratio;
    bound.tolerance = 1.0;
    bound.pass = tally.checked > 0 && tally.violations == 0;
    bound.detail = std::to_string(tally.violations) + " violations; worst is max|I^-1| / bound";
    take({bound});

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    int failed = 0;
    for (const auto& c : all) failed += c.pass ? 0 : 1;
    out << (failed ? "selftest FAILED: " + std::to_string(failed) + " check(s)" : std::string("selftest passed"))
        << " in " << std::fixed << std::setprecision(1) << secs << " s\n";
    return all;
}

}  // namespace postgl
