/*
 * C interface to the subnet-decentralized federated learning library.
 *
 * Conventions
 *  - Every function returns an sdgt_status; SDGT_OK is zero.
 *  - On failure, sdgt_last_error() returns a message for the calling thread,
 *    valid until the next call into the library from that thread.
 *  - Objects are opaque handles released with their *_free function
 *    (passing NULL is allowed).
 *  - Strings returned through `char** out` are owned by the caller and must be
 *    released with sdgt_string_free().
 *  - Configuration and results are exchanged as JSON text.
 */
#ifndef SDGT_SDGT_H
#define SDGT_SDGT_H

#include <stddef.h>

#if defined(_WIN32)
#define SDGT_API __declspec(dllexport)
#elif defined(SDGT_BUILDING_LIBRARY)
#define SDGT_API __attribute__((visibility("default")))
#else
#define SDGT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sdgt_status {
  SDGT_OK = 0,
  SDGT_ERR_INVALID_ARGUMENT = 1,
  SDGT_ERR_DISCONNECTED = 2,
  SDGT_ERR_SINGULAR = 3,
  SDGT_ERR_DIVERGED = 4,
  SDGT_ERR_IO = 5,
  SDGT_ERR_PARSE = 6,
  SDGT_ERR_CHECK_FAILED = 7,
  SDGT_ERR_INTERNAL = 99
} sdgt_status;

typedef struct sdgt_topology sdgt_topology;
typedef struct sdgt_problem sdgt_problem;
typedef struct sdgt_run sdgt_run;

/* Library version ("MAJOR.MINOR.PATCH") and RNG identifier; static strings. */
SDGT_API const char* sdgt_version(void);
SDGT_API const char* sdgt_rng_version(void);
SDGT_API const char* sdgt_last_error(void);
SDGT_API const char* sdgt_status_name(sdgt_status status);
SDGT_API void sdgt_string_free(char* s);

/* ---- topology -------------------------------------------------------- */
/* spec_json: {"n":30,"subnets":6,"radius_min":0.5,"radius_max":3.5,"seed":1} */
SDGT_API sdgt_status sdgt_topology_generate(const char* spec_json, sdgt_topology** out);
SDGT_API sdgt_status sdgt_topology_load(const char* path, sdgt_topology** out);
SDGT_API sdgt_status sdgt_topology_save(const sdgt_topology* topo, const char* path);
SDGT_API sdgt_status sdgt_topology_to_json(const sdgt_topology* topo, char** out);
SDGT_API sdgt_status sdgt_topology_num_clients(const sdgt_topology* topo, int* out);
SDGT_API sdgt_status sdgt_topology_num_subnets(const sdgt_topology* topo, int* out);
SDGT_API sdgt_status sdgt_topology_mixing_rate(const sdgt_topology* topo, int subnet, double* out);
SDGT_API void sdgt_topology_free(sdgt_topology* topo);

/* ---- problems -------------------------------------------------------- */
/* config_json: {"kind":"least_squares","kappa_preset":80,"noise_std":0.2,"seed":1}
 *           or {"kind":"classification","seed":1,...}                       */
SDGT_API sdgt_status sdgt_problem_create(const char* config_json, sdgt_problem** out);
SDGT_API sdgt_status sdgt_problem_load(const char* snapshot_path, sdgt_problem** out);
SDGT_API sdgt_status sdgt_problem_snapshot(const sdgt_problem* problem, char** out);
SDGT_API sdgt_status sdgt_problem_dim(const sdgt_problem* problem, int* out);
SDGT_API sdgt_status sdgt_problem_num_clients(const sdgt_problem* problem, int* out);
/* Mean loss over all clients at x (length dim). */
SDGT_API sdgt_status sdgt_problem_global_loss(const sdgt_problem* problem, const double* x,
                                              size_t len, double* out);
SDGT_API void sdgt_problem_free(sdgt_problem* problem);

/* ---- training runs --------------------------------------------------- */
/* config_json: {"algorithm":"sdgt","K":10,"T":100,"gamma":0.01,
 *               "sample_rate":1.0 | "samples_per_subnet":[..],
 *               "batch_size":0,"sampling_seed":3,"batching_seed":4,
 *               "diagnostics":false,"ds_cost":[..],"d2d_cost":[..]}
 * The run keeps its own references to topology and problem. */
SDGT_API sdgt_status sdgt_run_create(const sdgt_topology* topo, const sdgt_problem* problem,
                                     const char* config_json, sdgt_run** out);
/* One global round. Returns SDGT_ERR_DIVERGED once the model blows up. */
SDGT_API sdgt_status sdgt_run_step(sdgt_run* run);
/* Remaining rounds up to T; divergence stops the run and is reported as
 * SDGT_ERR_DIVERGED while the partial metrics stay available. */
SDGT_API sdgt_status sdgt_run_execute(sdgt_run* run);
SDGT_API sdgt_status sdgt_run_rounds(const sdgt_run* run, int* out);
SDGT_API sdgt_status sdgt_run_metrics_csv(const sdgt_run* run, char** out);
/* Copies the global model into buf (len must equal the problem dimension). */
SDGT_API sdgt_status sdgt_run_global_model(const sdgt_run* run, double* buf, size_t len);
SDGT_API void sdgt_run_free(sdgt_run* run);

/* ---- co-optimizer ---------------------------------------------------- */
/* problem_json: {"subnet_sizes":[..],"ds_cost":[..]|{"uniform":[1,100],"seed":6},
 *                "delta":1e-3 | "d2d_cost":[..],"lambda":[1,1,0.1,0.01],"k_max":50}
 * solution_json: {"solution":{...},"relaxed":{...}}; pareto_csv may be NULL. */
SDGT_API sdgt_status sdgt_cooptimize(const char* problem_json, char** solution_json,
                                     char** pareto_csv);

/* ---- experiments, plots, checks -------------------------------------- */
/* spec_path is a file or a preset name (fig3-like, fig4-like, fig5-like).
 * Honors SDGT_OUTPUT_DIR and SDGT_THREADS. With write_summary != 0 a
 * summary.csv is written next to the manifest. report_json receives
 * {"directory":..,"manifest":..,"runs":N,"diverged":M,"table":".."}. */
SDGT_API sdgt_status sdgt_experiment_run(const char* spec_path, int write_summary,
                                         char** report_json);
/* Normalized JSON document of a preset. */
SDGT_API sdgt_status sdgt_experiment_preset(const char* name, char** spec_json);
/* Renders the plot document at plot_spec_path; output_path receives the SVG path. */
SDGT_API sdgt_status sdgt_plot(const char* plot_spec_path, char** output_path);
/* Runs a check suite; report receives the formatted table. Returns
 * SDGT_ERR_CHECK_FAILED when any check fails (the report is still set). */
SDGT_API sdgt_status sdgt_check(const char* suite, char** report);

#ifdef __cplusplus
}
#endif

#endif /* SDGT_SDGT_H */
