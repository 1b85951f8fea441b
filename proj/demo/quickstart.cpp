// Simulate a randomized trial with a step-function effect, fit the rule
// ensemble, then print the estimated effects for a few rows and the top terms.

#include <cstdio>
#include <iostream>

#include "rulehte/rulehte.hpp"

int main() {
    using namespace rulehte;

    sim::ScenarioSpec spec;
    spec.scenario = 3;  // mu_1 paired with tau_3 = 2 * #{x1..x5 > 0} - 5
    spec.n = 600;
    spec.p = 10;
    spec.seed = 2024;
    const auto train = sim::gen_scenario(spec);
    spec.seed = 2025;
    const auto test = sim::gen_scenario(spec);

    FitConfig cfg;
    cfg.seed = 7;
    const auto report = fit_detailed(train.data, PropensitySource::constant(0.5), cfg);
    const auto& model = report.model;
    std::printf("rules generated %zu, after screening %zu, kept %zu; linear terms kept %zu\n",
                report.rules_generated, report.rules_screened, model.rules.size(), model.linear.size());

    const auto tau_hat = model.predict_hte(test.data.x());
    std::printf("test MSE %.4f\n", sim::mse(test.true_tau, tau_hat));
    for (std::size_t i = 0; i < 5; ++i) std::printf("row %zu: true %+.2f  estimated %+.3f\n", i, test.true_tau[i], tau_hat[i]);

    ReportFilter filter;
    filter.top = 8;
    std::cout << "\nmost important terms\n";
    for (const auto& row : filter_report(importance(model), filter).rows)
        std::printf("%8.4f  %+8.4f  %.3f  %s\n", row.importance, row.coefficient, row.support, row.description.c_str());

    save_model(model, "quickstart_model.json");
    std::cout << "\nmodel written to quickstart_model.json\n";
}
