#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ham.h"

static const char *NET =
    "[[layer]]\n"
    "name = \"x\"\n"
    "shape = [4]\n"
    "lagrangian = \"quadratic\"\n"
    "tau = 1.0\n"
    "\n"
    "[[layer]]\n"
    "name = \"h\"\n"
    "shape = [2]\n"
    "lagrangian = \"log_sum_exp\"\n"
    "beta = 4.0\n"
    "tau = 0.0\n"
    "\n"
    "[[connection]]\n"
    "between = [\"x\", \"h\"]\n"
    "kind = \"dense\"\n"
    "init = \"weights\"\n"
    "weights = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0]\n";

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, \
                    #cond, ham_last_error());                         \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    HamNetwork *net = NULL;
    CHECK(ham_network_from_toml(NET, &net) == HAM_STATUS_OK);
    CHECK(ham_network_layer_count(net) == 2);
    CHECK(ham_network_state_len(net) == 6);

    double cue[4] = {1.0, -1.0, 1.0, 1.0};
    double target[4] = {1.0, -1.0, 1.0, -1.0};
    double out[4];
    HamRecallReport rep;
    CHECK(ham_retrieve(net, cue, target, 4, NULL, out, &rep) == HAM_STATUS_OK);
    CHECK(rep.converged == 1);
    CHECK(rep.energy_final <= rep.energy_initial);

    double state[6] = {0};
    double e = 0.0;
    CHECK(ham_energy(net, state, 6, &e) == HAM_STATUS_OK);
    CHECK(fabs(e + log(2.0) / 4.0) < 1e-15);

    CHECK(ham_energy(net, state, 5, &e) == HAM_STATUS_SHAPE_MISMATCH);
    CHECK(strlen(ham_last_error()) > 0);

    HamIntegrator cfg;
    CHECK(ham_integrator_default(net, &cfg) == HAM_STATUS_OK);
    cfg.method = HAM_METHOD_RK4;
    HamRelaxResult res;
    state[0] = 2.0;
    CHECK(ham_relax(net, state, 6, &cfg, &res) == HAM_STATUS_OK);
    CHECK(res.converged == 1);

    ham_network_free(net);
    printf("ok %s\n", ham_version());
    return 0;
}
