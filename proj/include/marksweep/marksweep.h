#ifndef MARKSWEEP_H
#define MARKSWEEP_H

#include <stddef.h>
#include <stdint.h>

#if defined(MARKSWEEP_BUILDING_LIBRARY)
#define MS_API __attribute__((visibility("default")))
#else
#define MS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum {
  MS_OK = 0,
  MS_ERR_USAGE = 1,
  MS_ERR_IO = 2,
  MS_ERR_GEOMETRY = 3,
  MS_ERR_CHECKPOINT = 4,
  MS_ERR_NUMERIC = 5
} ms_status;

typedef struct ms_image ms_image;
typedef struct ms_model ms_model;
typedef struct ms_key ms_key;

typedef struct {
  double mu;    /* 0-255 scale */
  double sigma; /* 0-255 scale */
  int s;
  double core_gain;
  double ring_gain;
  double canny_low;
  double canny_high;
} ms_noise_params;

/* Message of the last failed call on this thread ("" if none). */
MS_API const char* ms_last_error(void);
MS_API const char* ms_version(void);
/* Frees strings returned through char** out-parameters. */
MS_API void ms_string_free(char* s);

/* Images: H x W x C doubles in [0,1], row-major with interleaved channels. */
MS_API ms_status ms_image_load(const char* path, ms_image** out);
MS_API ms_status ms_image_save(const ms_image* img, const char* path);
MS_API ms_status ms_image_create(int height, int width, int channels, const double* data, ms_image** out);
MS_API int ms_image_height(const ms_image* img);
MS_API int ms_image_width(const ms_image* img);
MS_API int ms_image_channels(const ms_image* img);
MS_API ms_status ms_image_copy_data(const ms_image* img, double* out, size_t count);
MS_API void ms_image_free(ms_image* img);

/* Watermark keys; the mid-band defaults to the library's standard set. */
MS_API ms_status ms_key_create(uint64_t seed, double alpha, int coeffs_per_bit, ms_key** out);
MS_API ms_status ms_key_default(ms_key** out);
MS_API ms_status ms_key_set_midband(ms_key* key, const int* zigzag, size_t count);
MS_API void ms_key_free(ms_key* key);

/* payload_hex may be NULL for a random payload drawn from seed. The payload
   actually embedded is returned in *payload_out (MSB-first hex). */
MS_API ms_status ms_embed(const ms_image* x, const ms_key* key, int bits, const char* payload_hex, uint64_t seed,
                          ms_image** out, char** payload_out);
MS_API ms_status ms_decode(const ms_image* img, const ms_key* key, int bits, char** payload_out);
MS_API ms_status ms_bit_accuracy(const char* hex_a, const char* hex_b, int bits, double* out);
MS_API ms_status ms_psnr(const ms_image* a, const ms_image* b, double* out);
MS_API ms_status ms_ssim(const ms_image* a, const ms_image* b, double* out);
MS_API ms_status ms_threshold(int bits, double fpr, int* tau_bits, double* tau_fraction);

MS_API ms_status ms_model_load(const char* checkpoint_path, ms_model** out);
MS_API ms_status ms_model_init(uint64_t seed, ms_model** out);
MS_API void ms_model_free(ms_model* model);

MS_API void ms_noise_params_default(ms_noise_params* p);
MS_API ms_status ms_attack_marksweep(const ms_image* x_w, const ms_model* model, const ms_noise_params* p,
                                     int sharpen, uint64_t seed, ms_image** out, double* seconds);
MS_API ms_status ms_attack_jpeg(const ms_image* img, int quality, ms_image** out);
/* *promoted (optional) reports an even ksize bumped to the next odd size. */
MS_API ms_status ms_attack_blur(const ms_image* img, int ksize, ms_image** out, int* promoted);
MS_API ms_status ms_attack_noise(const ms_image* img, double mu, double sigma, uint64_t seed, ms_image** out);
MS_API ms_status ms_attack_crop(const ms_image* img, double ratio, ms_image** out);
MS_API ms_status ms_unsharp(const ms_image* img, double amount, double radius, ms_image** out);

/* Config-driven runs. Each writes the resolved config and code version into
   the configured output directory; summaries are returned as strings.
   threads > 0 overrides the config's thread count. */
MS_API ms_status ms_config_resolve(const char* config_path, char** resolved_json);
MS_API ms_status ms_train(const char* config_path, int threads, char** summary_json);
MS_API ms_status ms_eval(const char* config_path, int threads, char** summary_text);
MS_API ms_status ms_dpi(const char* config_path, int threads, char** result_json);

MS_API ms_status ms_synth_dataset(const char* dir, int count, uint64_t seed, int height, int width);
MS_API ms_status ms_file_sha256(const char* path, char** hex);

#ifdef __cplusplus
}
#endif

#endif
