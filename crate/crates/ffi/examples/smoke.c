#include <assert.h>
#include <stdio.h>
#include "privmap.h"

int main(void) {
    printf("version %s\n", pm_version());
    PmModel *model = pm_model_preset("CifarCnn");
    assert(model != NULL);
    assert(pm_model_layer_count(model) == 11);

    PmPolicy *policy = pm_policy_derive(model, 0.4, 0.01);
    assert(policy != NULL);
    assert(pm_policy_layer_cap(policy, 1) == 8);
    assert(pm_policy_layer_cap(policy, 5) == 16);
    assert(pm_policy_layer_cap(policy, 9) == 32);

    PmFleet *fleet = pm_fleet_new(1.0);
    assert(pm_fleet_add_helpers(fleet, "rpi3", 8) == PmOk);
    assert(pm_fleet_add_source(fleet, "CifarCnn") == PmOk);

    PmSolveResult result;
    PmStatus status = pm_solve_greedy(model, policy, fleet, 0.7, 0.3, &result);
    assert(status == PmOk);
    printf("objective %.6f s, shared %llu bits\n", result.objective_s,
           (unsigned long long)result.shared_bits);
    assert(result.objective_s > 0.0);

    PmFleet *small = pm_fleet_new(1.0);
    pm_fleet_add_helpers(small, "rpi3", 7);
    pm_fleet_add_source(small, "CifarCnn");
    status = pm_solve_greedy(model, policy, small, 0.7, 0.3, &result);
    assert(status == PmRejected);
    printf("rejected as expected: %s\n", pm_last_error());

    pm_fleet_free(small);
    pm_fleet_free(fleet);
    pm_policy_free(policy);
    pm_model_free(model);
    puts("C ABI smoke test passed");
    return 0;
}
