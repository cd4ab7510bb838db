#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "slicesim.h"

static int check(SlicesimStatus s, const char *what) {
    if (s != SLICESIM_STATUS_OK) {
        const char *e = slicesim_last_error();
        fprintf(stderr, "%s: status %d: %s\n", what, (int)s, e ? e : "(none)");
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s scenario.json\n", argv[0]);
        return 2;
    }
    SlicesimScenario *sc = NULL;
    if (check(slicesim_scenario_load(argv[1], &sc), "load")) return 1;

    SlicesimRun *run = NULL;
    if (check(slicesim_run(sc, false, 0, &run), "run")) return 1;

    double mbps = 0.0;
    if (check(slicesim_run_flow_mean_mbps(run, "dl", &mbps), "flow")) return 1;

    size_t passed = 0, total = 0;
    char *report = NULL;
    if (check(slicesim_run_check(run, &passed, &total, &report), "check")) return 1;

    char *metrics = NULL;
    if (check(slicesim_run_artifact(run, SLICESIM_ARTIFACT_METRICS, &metrics), "artifact")) return 1;
    int header_ok = strncmp(metrics, "time_us,entity,metric,value\n", 28) == 0;

    SlicesimStatus bad = slicesim_run_flow_mean_mbps(run, "nope", &mbps);

    printf("dl=%.2f passed=%zu total=%zu header=%d missing=%d\n", mbps, passed, total, header_ok, (int)bad);
    printf("%s\n", report);

    slicesim_string_free(metrics);
    slicesim_string_free(report);
    slicesim_run_free(run);
    slicesim_scenario_free(sc);
    return 0;
}
