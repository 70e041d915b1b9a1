#ifndef IVMAPS_H
#define IVMAPS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Values 3 and above match the command-line exit codes.
typedef enum IvmStatus {
  IVM_STATUS_OK = 0,
  IVM_STATUS_NULL_POINTER = 1,
  IVM_STATUS_INVALID_STRING = 2,
  IVM_STATUS_IO = 3,
  IVM_STATUS_INVALID_INPUT = 4,
  IVM_STATUS_DOMAIN = 5,
  IVM_STATUS_CAPACITY = 6,
  IVM_STATUS_HYPOTHESIS = 7,
  IVM_STATUS_NON_CONVERGENCE = 8,
  IVM_STATUS_MEASURE = 9,
  IVM_STATUS_FAMILY = 10,
  IVM_STATUS_STATISTICS = 11,
  IVM_STATUS_BUFFER_TOO_SMALL = 12,
  IVM_STATUS_PANIC = 99,
} IvmStatus;

// Opaque piecewise-constant density handle.
typedef struct IvmDensity IvmDensity;

// Opaque map handle.
typedef struct IvmMap IvmMap;

// Opaque Hofbauer tower handle.
typedef struct IvmTower IvmTower;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next failing call on the same thread; do not free.
const char *ivm_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library, freed once.
void ivm_string_free(char *s);

// Builds a map from a JSON document, a path to one, or a shorthand such as
// `vssv:0.4:60`.
//
// # Safety
// `spec` must be a nul-terminated string and `out_map` a valid pointer.
enum IvmStatus ivm_map_new(const char *spec, struct IvmMap **out_map);

// # Safety
// `map` must be null or a handle from `ivm_map_new`, freed once.
void ivm_map_free(struct IvmMap *map);

// # Safety
// Pointers must be valid.
enum IvmStatus ivm_map_branch_count(const struct IvmMap *map, size_t *out_count);

// `T(x)`.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_map_apply(const struct IvmMap *map, double x, double *out_y);

// Largest probed one-step expansion sum at exponent `q` and scale `delta`;
// `out_pass` is 1 when it is below 1.
//
// # Safety
// Pointers must be valid; `out_pass` may be null.
enum IvmStatus ivm_h1_theta0(const struct IvmMap *map,
                             double q,
                             double delta,
                             double *out_theta,
                             int *out_pass);

// Invariant density: Lebesgue, closed form, or Ulam estimate as available.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_invariant(const struct IvmMap *map, struct IvmDensity **out_density);

// Ulam stationary density on `bins` cells aligned with the branch partition.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_ulam(const struct IvmMap *map,
                                size_t bins,
                                struct IvmDensity **out_density);

// `T^steps_* m` starting from Lebesgue measure.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_pushforward(const struct IvmMap *map,
                                       size_t steps,
                                       struct IvmDensity **out_density);

// # Safety
// `density` must be null or a handle from this library, freed once.
void ivm_density_free(struct IvmDensity *density);

// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_eval(const struct IvmDensity *density, double x, double *out_value);

// Mass of `(left, right]`.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_mass_on(const struct IvmDensity *density,
                                   double left,
                                   double right,
                                   double *out_mass);

// L¹ distance on `(left, right]`.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_density_l1_distance(const struct IvmDensity *a,
                                       const struct IvmDensity *b,
                                       double left,
                                       double right,
                                       double *out_distance);

// Copies the pieces into caller buffers of length `capacity`. `out_len`
// always receives the piece count; `BufferTooSmall` is returned when it
// exceeds `capacity`. Buffers may be null when `capacity` is 0.
//
// # Safety
// Non-null buffers must hold `capacity` doubles.
enum IvmStatus ivm_density_pieces(const struct IvmDensity *density,
                                  double *left,
                                  double *right,
                                  double *value,
                                  size_t capacity,
                                  size_t *out_len);

// Hofbauer tower closed under one step, nodes at level `depth` and beyond
// left unexpanded.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_tower_build(const struct IvmMap *map,
                               size_t depth,
                               size_t node_cap,
                               struct IvmTower **out_tower);

// # Safety
// `tower` must be null or a handle from this library, freed once.
void ivm_tower_free(struct IvmTower *tower);

// # Safety
// Pointers must be valid.
enum IvmStatus ivm_tower_node_count(const struct IvmTower *tower, size_t *out_count);

// Interval and level of node `index`.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_tower_node(const struct IvmTower *tower,
                              size_t index,
                              double *out_left,
                              double *out_right,
                              size_t *out_level);

// JSON dump of nodes and edges; free with `ivm_string_free`.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_tower_to_json(const struct IvmTower *tower, char **out_json);

// Exact `Cov(f, g∘T^n)` for `n = 0..len-1`. Observables are JSON
// documents such as `{"kind":"power_singularity","tau":0.3}`; `g` may be
// null to reuse `f`.
//
// # Safety
// `out_values` must hold `len` doubles.
enum IvmStatus ivm_correlation_series(const struct IvmMap *map,
                                      const char *f_json,
                                      const char *g_json,
                                      double *out_values,
                                      size_t len);

// Green–Kubo `σ²` of `f` with `truncation` correlation terms.
//
// # Safety
// Pointers must be valid.
enum IvmStatus ivm_green_kubo(const struct IvmMap *map,
                              const char *f_json,
                              size_t truncation,
                              double *out_sigma2);

// Runs a named reproduction recipe, writing artifacts into `out_dir`.
// `out_passed` is 1 when every check passed; `out_table` (nullable)
// receives the printed table, to be freed with `ivm_string_free`.
//
// # Safety
// Strings must be nul-terminated; `out_passed` must be valid.
enum IvmStatus ivm_repro_run(const char *name,
                             const char *out_dir,
                             uint64_t seed,
                             int *out_passed,
                             char **out_table);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVMAPS_H */
