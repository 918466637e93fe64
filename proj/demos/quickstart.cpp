// Solve the hinged beam problem on (0,1) with f = |X|^2, g = |eta|^2 through the
// library API and print the eigenvalue sequence. The limit is 64.
#include <cstdio>

#include "linfeig/linfeig.hpp"

int main()
{
    using namespace linfeig;
    const DomainSpec dom = DomainSpec::interval(0.0, 1.0);
    auto disc = std::make_shared<Discretization>(dom, 201, BoundaryMode::Hinged);
    auto prob = std::make_shared<PProblem>(disc, make_density_f("power", {{"alpha", 2}}),
                                           make_density_g("value_power", {{"gamma", 2}}));
    ScheduleSettings schedule;
    schedule.p_max = 128;
    schedule.lambda_tol = 0.0;
    Continuation cont(prob, schedule, SolverSettings{});
    const ContinuationTrace trace = cont.run();

    for (const auto& s : trace.steps)
        std::printf("p = %-4g  Lambda_p = %.8f  L_p = %.8f  max g = %.6f\n", s.p, s.Lambda_p, s.L_p, s.constraint_linf);
    if (trace.extrapolation) std::printf("extrapolated Lambda_inf = %.6f\n", trace.extrapolation->Lambda_inf);

    const BoundsReport b = compute_bounds(prob->f().constants(), prob->g(), dom, BoundaryMode::Hinged);
    std::printf("lower bound = %.6f (%s)\n", b.lower, b.upper_note.c_str());
}
