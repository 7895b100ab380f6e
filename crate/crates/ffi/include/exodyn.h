#ifndef EXODYN_H
#define EXODYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of joints in every joint vector.
#define EXO_DOF 7

// Result of every fallible call.
typedef enum ExoStatus {
  EXO_STATUS_OK = 0,
  // A required pointer argument was null.
  EXO_STATUS_NULL_POINTER = 1,
  // An argument was out of range or had the wrong size.
  EXO_STATUS_INVALID_ARGUMENT = 2,
  // The computation failed numerically (e.g. singular mass matrix).
  EXO_STATUS_NUMERICAL = 3,
  // A file could not be read.
  EXO_STATUS_IO = 4,
  // A file was read but its contents are malformed.
  EXO_STATUS_PARSE = 5,
  // An internal error; the library state is unchanged.
  EXO_STATUS_INTERNAL = 6,
} ExoStatus;

// Trained torque-prediction network.
typedef struct ExoMlp ExoMlp;

// Dynamic model of one subject.
typedef struct ExoModel ExoModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds the model of a subject of `height_in` inches and `weight_lb` pounds
// with the default options. On success `*out` owns a new handle.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ExoStatus exo_model_new(double height_in, double weight_lb, struct ExoModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from `exo_model_new` not yet freed.
void exo_model_free(struct ExoModel *model);

// Joint torques required for the given motion.
//
// # Safety
// Input arrays hold `EXO_DOF` doubles; `tau_out` has room for `EXO_DOF`.
enum ExoStatus exo_inverse_dynamics(const struct ExoModel *model,
                                    const double *theta,
                                    const double *theta_dot,
                                    const double *theta_ddot,
                                    double *tau_out);

// Mass matrix (row-major, `EXO_DOF`²), Coriolis/centrifugal and gravity torques.
//
// # Safety
// Inputs hold `EXO_DOF` doubles; `mass_out` has room for `EXO_DOF * EXO_DOF`,
// the other outputs for `EXO_DOF`.
enum ExoStatus exo_decompose(const struct ExoModel *model,
                             const double *theta,
                             const double *theta_dot,
                             double *mass_out,
                             double *coriolis_out,
                             double *gravity_out);

// Joint accelerations under applied torques; `friction` adds joint friction.
//
// # Safety
// Inputs hold `EXO_DOF` doubles; `accel_out` has room for `EXO_DOF`.
enum ExoStatus exo_forward_dynamics(const struct ExoModel *model,
                                    const double *theta,
                                    const double *theta_dot,
                                    const double *tau,
                                    bool friction,
                                    double *accel_out);

// Friction torque of one joint at `omega` rad/s with the default parameters.
//
// # Safety
// `out` must point to one writable double.
enum ExoStatus exo_friction_torque(double omega, double *out);

// Homogeneous transform of the last joint frame in the base frame (row-major 4×4).
//
// # Safety
// `theta` holds `EXO_DOF` doubles; `pose_out` has room for 16.
enum ExoStatus exo_forward_kinematics(const struct ExoModel *model,
                                      const double *theta,
                                      double *pose_out);

// Loads a network saved by the `train` command.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid storage for one handle.
enum ExoStatus exo_mlp_load(const char *path, struct ExoMlp **out);

// Releases a network handle. Null is ignored.
//
// # Safety
// `mlp` must be null or a handle from `exo_mlp_load` not yet freed.
void exo_mlp_free(struct ExoMlp *mlp);

// Number of inputs the network expects (0 for a null handle).
//
// # Safety
// `mlp` must be null or a live handle.
size_t exo_mlp_input_width(const struct ExoMlp *mlp);

// Number of outputs the network produces (0 for a null handle).
//
// # Safety
// `mlp` must be null or a live handle.
size_t exo_mlp_output_width(const struct ExoMlp *mlp);

// Evaluates the network on one input row.
//
// # Safety
// `input` holds `input_len` doubles and `output` has room for `output_len`.
enum ExoStatus exo_mlp_forward(const struct ExoMlp *mlp,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next library call on the same thread.
const char *exo_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *exo_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXODYN_H */
