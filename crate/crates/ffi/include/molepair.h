/* C ABI for the pairwise-ranking OOD detection library.
 *
 * Conventions:
 *   - Functions returning MpStatus write their result through the out
 *     pointer only on MP_OK.
 *   - Every handle returned by a load/train call must be released with the
 *     matching *_free function exactly once.
 *   - mp_last_error() returns the message of the most recent failure on the
 *     calling thread; the pointer stays valid until the next failing call on
 *     that thread.
 *   - Scores are OOD affinities: higher = more out-of-distribution.
 */

#ifndef MOLEPAIR_H
#define MOLEPAIR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Opaque handles. */
typedef struct MpDataset MpDataset;
typedef struct MpHead MpHead;

/* Status codes; non-zero values match the CLI exit-code classes where one
 * exists (2 usage, 3 data, 4 numeric). */
typedef enum MpStatus {
  MP_OK = 0,
  MP_ERR_USAGE = 2,
  MP_ERR_DATA = 3,
  MP_ERR_NUMERIC = 4,
  MP_ERR_NULL_POINTER = 5,
  MP_ERR_UTF8 = 6,
} MpStatus;

/* Library version as a static NUL-terminated string. */
const char *mp_version(void);

/* Message of the most recent failure on this thread ("" if none). */
const char *mp_last_error(void);

/* Datasets. Formats match the library: CSV with header
 * id,dist,split,label,e0..e{d-1}, or the MPER binary format. */
MpStatus mp_dataset_load_csv(const char *path, MpDataset **out);
MpStatus mp_dataset_load_binary(const char *path, MpDataset **out);
MpStatus mp_dataset_save_binary(const MpDataset *ds, const char *path);
size_t mp_dataset_len(const MpDataset *ds);
size_t mp_dataset_dim(const MpDataset *ds);
void mp_dataset_free(MpDataset *ds);

/* Train the ranking detector. config_json may be NULL or empty for the
 * published defaults; otherwise it holds the same JSON accepted by the CLI
 * `train --config` file. */
MpStatus mp_train(const MpDataset *ds, const char *config_json, MpHead **out);

/* Checkpoint IO (MPCK format; bit-exact round trip). */
MpStatus mp_head_save(const MpHead *head, const char *path);
MpStatus mp_head_load(const char *path, MpHead **out);

/* Score n row-major embeddings of width dim into out_scores[n]. */
MpStatus mp_head_score(const MpHead *head, const double *embeddings, size_t n,
                       size_t dim, double *out_scores);
void mp_head_free(MpHead *head);

/* Threshold-free metrics on raw score arrays (m ID scores, k OOD scores). */
MpStatus mp_auroc(const double *id_scores, size_t m, const double *ood_scores,
                  size_t k, double *out);
MpStatus mp_aupr(const double *id_scores, size_t m, const double *ood_scores,
                 size_t k, double *out);
MpStatus mp_fpr95(const double *id_scores, size_t m, const double *ood_scores,
                  size_t k, double *out);

#ifdef __cplusplus
}
#endif

#endif /* MOLEPAIR_H */
