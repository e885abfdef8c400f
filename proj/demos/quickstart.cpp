// Generate a p = 100 model, draw 400p samples and fit it with both solvers.

#include <iostream>

#include "lvggm/lvggm.hpp"

int main()
{
    using namespace lvggm;

    const SyntheticModel model = gen_model(100, std::nullopt, 42);
    const SymMatrix c = sample_covariance(model, 400 * model.dim(), 7);
    const ModelContext ctx(model.s_star, c);
    const double true_nll = nll(ctx, model.l_star);

    SolverConfig cfg;
    cfg.rank = model.rank;
    cfg.truth = model.l_star.materialize();
    cfg.true_nll_floor = true_nll;

    const FitResult ep = ep_lvm(ctx, cfg);
    const FitResult ap = ap_lvm(ctx, cfg);

    std::cout << "true NLL " << true_nll << '\n';
    for (const auto& [name, fit] : {std::pair{"ep", &ep}, std::pair{"ap-bk", &ap}}) {
        const TraceRecord& last = fit->trace.records.back();
        std::cout << name << ": " << fit->trace.iterations << " iterations, NLL " << last.nll << ", rel. error "
                  << *last.rel_error << ", rank " << last.rank << ", stop " << to_string(fit->trace.stop_reason)
                  << '\n';
    }
}
