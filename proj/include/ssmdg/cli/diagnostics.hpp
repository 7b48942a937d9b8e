#pragma once

#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ssmdg/diff/tensor.hpp"
#include "ssmdg/losses/losses.hpp"
#include "ssmdg/model/model.hpp"
#include "ssmdg/prototypes/prototypes.hpp"

namespace ssmdg::cli {

using diff::Tensor;

struct CheckResult {
    std::string name;
    bool passed = false;
    double max_error = 0.0;
    std::string detail;
    std::set<diff::OpKind> kernels;  // kernels exercised by the check
};

/// Small model plus a frozen batch: gate decisions and pseudo-labels are drawn
/// at random once so every loss term is a smooth function of the parameters.
struct GradientFixture {
    GradientFixture(model::Model m, prototypes::PrototypeBank b) : model(std::move(m)), bank(std::move(b)) {}

    model::Model model;
    prototypes::PrototypeBank bank;
    std::vector<Tensor> labeled;
    std::vector<std::size_t> labels;
    std::vector<Tensor> weak;
    std::vector<Tensor> strong;
    std::vector<std::size_t> domains;
    std::vector<std::size_t> consensus, consensus_labels;
    std::vector<std::size_t> disagreement, disagreement_labels;
    std::vector<std::size_t> accepted, accepted_labels;
    double q = 0.7;
    losses::ObjectiveWeights weights;
    prototypes::CmpaSwitches cmpa;
};

GradientFixture make_gradient_fixture(std::uint64_t seed);

enum class LossTerm { sup, cdcr, dar, cmpa, total };
std::string_view loss_term_name(LossTerm term);
inline constexpr LossTerm kAllLossTerms[] = {LossTerm::sup, LossTerm::cdcr, LossTerm::dar, LossTerm::cmpa,
                                             LossTerm::total};

/// Builds the requested term from the fixture's current parameter values.
Tensor evaluate_term(const GradientFixture& fixture, LossTerm term);

/// Finite-difference check of every kernel through a small program.
std::vector<CheckResult> kernel_gradient_checks(std::uint64_t seed, double tolerance = 1e-4);
/// Finite-difference check of each loss term over `fixtures` random fixtures.
std::vector<CheckResult> loss_gradient_checks(std::size_t fixtures, std::uint64_t seed, double tolerance = 1e-4);
/// gate_sample against a rule-by-rule evaluation on the exhaustive head grid.
CheckResult gate_oracle_check(double tau = 0.95);
/// Ten constant-mean EMA updates against the closed form.
CheckResult ema_unroll_check();

/// Kernels common to every failing check and absent from every passing one.
std::vector<diff::OpKind> suspect_kernels(const std::vector<CheckResult>& results);

/// Runs every suite and prints one line per check. Returns true when all pass.
bool run_diagnostics(std::ostream& out, std::size_t fixtures = 20, std::uint64_t seed = 0);

}  // namespace ssmdg::cli
