#include <stdio.h>
#include "ivmaps.h"

int main(void) {
    IvmMap *map = NULL;
    if (ivm_map_new("vssv:0.4:60", &map) != IVM_STATUS_OK) {
        fprintf(stderr, "%s\n", ivm_last_error());
        return 1;
    }
    double theta = 0.0;
    int pass = 0;
    ivm_h1_theta0(map, 0.3, 0.1, &theta, &pass);

    IvmDensity *h = NULL;
    ivm_density_invariant(map, &h);
    double mass = 0.0;
    ivm_density_mass_on(h, 0.0, 1.0, &mass);

    IvmTower *tower = NULL;
    ivm_tower_build(map, 100, 10000, &tower);
    size_t nodes = 0;
    ivm_tower_node_count(tower, &nodes);

    IvmStatus bad = ivm_map_new("no-such-map", NULL);
    printf("%.12f %d %.12f %zu %d\n", theta, pass, mass, nodes, (int)bad);

    ivm_tower_free(tower);
    ivm_density_free(h);
    ivm_map_free(map);
    return 0;
}
