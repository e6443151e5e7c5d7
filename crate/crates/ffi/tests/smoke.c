/* Drives the library through the generated header. */
#include <stdio.h>
#include <string.h>

#include "vdc_ffi.h"

int main(int argc, char **argv) {
    if (argc < 2) {
        return 10;
    }
    VdcSimulation *sim = NULL;
    if (vdc_simulation_from_path(argv[1], &sim) != VDC_STATUS_OK) {
        return 11;
    }
    for (int i = 0; i < 100; ++i) {
        if (vdc_simulation_step(sim) != VDC_STATUS_OK) {
            return 12;
        }
    }
    double t = 0.0;
    vdc_simulation_time(sim, &t);
    double ups[6];
    vdc_simulation_upsilon(sim, ups);
    size_t needed = 0;
    vdc_simulation_summary_json(sim, NULL, 0, &needed);
    char buf[8192];
    if (needed > sizeof buf || vdc_simulation_summary_json(sim, buf, sizeof buf, &needed) != VDC_STATUS_OK) {
        return 13;
    }
    printf("t=%.3f summary=%zu bytes\n", t, needed);
    vdc_simulation_free(sim);

    VdcSimulation *bad = NULL;
    if (vdc_simulation_from_toml("not = [valid", &bad) != VDC_STATUS_CONFIG_ERROR || bad != NULL) {
        return 14;
    }
    char msg[512];
    vdc_last_error(msg, sizeof msg, &needed);
    printf("error: %s (%s)\n", msg, vdc_status_name(VDC_STATUS_CONFIG_ERROR));
    return 0;
}
