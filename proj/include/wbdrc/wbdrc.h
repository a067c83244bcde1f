/* C interface to the whole-body disturbance-rejection control laboratory.
 *
 * The library runs closed-loop legged-robot scenarios: a centroidal MPC,
 * an adaptive disturbance estimator, and a prioritized whole-body controller
 * around a rigid-body simulator with injectable disturbances. Scenarios are
 * plain-text files (see scenarios/ in the source tree for the grammar); every
 * run can log a versioned CSV trace and reports tracking metrics.
 *
 * All objects are opaque handles created and destroyed by this API. Functions
 * that can fail return wbdrc_status; on failure wbdrc_last_error() holds a
 * human-readable message for the calling thread until its next API call.
 * Handles are not thread-safe individually, but distinct handles may be used
 * from distinct threads.
 */
#ifndef WBDRC_H
#define WBDRC_H

#include <stddef.h>

#if defined(_WIN32)
#define WBDRC_API __declspec(dllexport)
#else
#define WBDRC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wbdrc_status {
  WBDRC_OK = 0,
  WBDRC_ERROR = 1,            /* numerical or internal library failure */
  WBDRC_CONTROLLER_FAULT = 2, /* controller lost the robot mid-run */
  WBDRC_CONFIG_ERROR = 3,     /* bad scenario, model, or option value */
  WBDRC_INVALID_ARGUMENT = 4, /* null handle or out-of-range argument */
} wbdrc_status;

typedef struct wbdrc_scenario wbdrc_scenario;
typedef struct wbdrc_report wbdrc_report;

/* Per-run options. Zero-initialize and set the fields you need; NULL string
 * fields keep the scenario's own values. */
typedef struct wbdrc_run_options {
  const char* variant; /* "wbdrc" or "standard"; NULL keeps the scenario's */
  const char* out_dir; /* directory for the CSV trace; NULL keeps the scenario's */
  unsigned seed;       /* recorded in the trace header */
  int write_csv;       /* nonzero writes the CSV trace */
} wbdrc_run_options;

/* Closed-loop metrics for one run. Times in seconds, lengths in meters,
 * forces in newtons. */
typedef struct wbdrc_metrics {
  double height_rmse;            /* base-height tracking RMSE */
  double max_height_deviation;   /* worst base-height excursion */
  double fall_time;              /* time of fall, -1 when the robot stood */
  double estimator_steady_error; /* mean base-row estimate error, last 20% */
  double wrench_identity_max;    /* worst desired-wrench reconstruction residual */
  double simulated_duration;     /* simulated seconds actually completed */
  int fell;                      /* nonzero when the fall detector fired */
  int theta_in_bounds;           /* nonzero when the adaptation stayed boxed */
  int mpc_solves;                /* accepted plan updates */
  int mpc_failures;              /* planner solves that threw */
  int wbc_holds;                 /* ticks that reused the previous torque */
  int unilateral_violations;     /* simulator pull-force warnings */
} wbdrc_metrics;

/* Library version as "major.minor.patch". */
WBDRC_API const char* wbdrc_version(void);

/* Message for the calling thread's most recent failure. Never NULL. */
WBDRC_API const char* wbdrc_last_error(void);

/* Scenario loading. *out is set on WBDRC_OK and must be freed. */
WBDRC_API wbdrc_status wbdrc_scenario_load(const char* path, wbdrc_scenario** out);
WBDRC_API wbdrc_status wbdrc_scenario_parse(const char* text, const char* name,
                                            wbdrc_scenario** out);
WBDRC_API void wbdrc_scenario_free(wbdrc_scenario* scenario);

WBDRC_API const char* wbdrc_scenario_name(const wbdrc_scenario* scenario);
WBDRC_API const char* wbdrc_scenario_robot(const wbdrc_scenario* scenario);
WBDRC_API const char* wbdrc_scenario_variant(const wbdrc_scenario* scenario);
WBDRC_API double wbdrc_scenario_duration(const wbdrc_scenario* scenario);

/* Runs one closed-loop scenario. options may be NULL for defaults
 * (scenario's variant and directory, seed 0, CSV written). *out is set on
 * WBDRC_OK and WBDRC_CONTROLLER_FAULT alike only when the run produced a
 * report; on fault *out is NULL and the message explains the fault. */
WBDRC_API wbdrc_status wbdrc_run(const wbdrc_scenario* scenario,
                                 const wbdrc_run_options* options, wbdrc_report** out);

/* Runs the scenario twice, compensated and baseline, with shared options.
 * Both reports are set on WBDRC_OK and must be freed. rmse_ratio, when
 * non-NULL, receives compensated RMSE / baseline RMSE (1 when both are zero,
 * +inf when only the baseline is zero). */
WBDRC_API wbdrc_status wbdrc_compare(const wbdrc_scenario* scenario,
                                     const wbdrc_run_options* options,
                                     wbdrc_report** wbdrc_out, wbdrc_report** standard_out,
                                     double* rmse_ratio);

WBDRC_API void wbdrc_report_free(wbdrc_report* report);
WBDRC_API const char* wbdrc_report_variant(const wbdrc_report* report);
/* Path of the CSV trace, "" when none was written. */
WBDRC_API const char* wbdrc_report_csv_path(const wbdrc_report* report);
WBDRC_API wbdrc_metrics wbdrc_report_metrics(const wbdrc_report* report);
WBDRC_API int wbdrc_report_warning_count(const wbdrc_report* report);
/* Warning text by index, NULL when index is out of range. */
WBDRC_API const char* wbdrc_report_warning(const wbdrc_report* report, int index);

#ifdef __cplusplus
}
#endif

#endif /* WBDRC_H */
