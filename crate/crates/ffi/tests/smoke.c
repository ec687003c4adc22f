#include <math.h>
#include <stdio.h>
#include "pgc.h"

int main(void) {
    double n = 0.0;
    if (pgc_limit_phase_averaged(0.9128709291752769, &n) != PGC_STATUS_OK) return 1;
    if (fabs(n - (sqrt(15.0 / 8.0) - 0.5)) > 1e-12) return 2;

    PgcCrystal *c = NULL;
    if (pgc_crystal_new(3, 217e3, 2.67e6, 2.64e6, 0.0, 729e-9, &c) != PGC_STATUS_OK) return 3;
    size_t ions = 0, modes = 0;
    bool planar = true;
    pgc_crystal_info(c, &ions, &modes, &planar);
    double f = 0.0;
    PgcModeClass k;
    if (pgc_crystal_mode(c, 0, &f, &k) != PGC_STATUS_OK || k != PGC_MODE_CLASS_AXIAL) return 4;
    pgc_crystal_free(c);
    if (ions != 3 || modes != 9 || planar || fabs(f / 217e3 - 1.0) > 1e-9) return 5;

    if (pgc_limit_fixed_phase(-1.0, &n) != PGC_STATUS_DOMAIN) return 6;
    char msg[256];
    if (pgc_last_error(msg, sizeof msg) == 0) return 7;
    printf("%s ok (%s)\n", pgc_version(), msg);
    return 0;
}
