#pragma once
#include <string>

#include "disp/trainer.hpp"

namespace disp {

enum class ImageFormat { Pgm16, Rawf32, Ppm8 };

ImageFormat image_format_from_name(const std::string& s);
// Picks the format from the file extension (.pgm/.rawf32/.ppm).
ImageFormat image_format_from_path(const std::string& path);

// pgm16: binary P5, maxval 65535, big-endian samples, values mapped by /65535.
// rawf32: magic "DISP", version u8, H/W/C little-endian u32, f32 LE payload.
// ppm8: binary P6, values clipped to [0,1] and scaled to 255.
Tensor load_image(const std::string& path, ImageFormat fmt);
void save_image(const std::string& path, const Tensor& image, ImageFormat fmt);

// JSON config document covering pipeline, controller, trainer and synth
// sections. Unknown keys are rejected with the offending path.
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

// Single-file checkpoint: JSON manifest (config, tensor directory, buffer and
// optimizer metadata) plus a little-endian f64 payload. Load->save round
// trips are byte-identical.
void save_checkpoint(const std::string& path, const Trainer& trainer);
// Rebuilds a Trainer (including datasets) from the stored config and state.
std::unique_ptr<Trainer> load_checkpoint(const std::string& path);

struct CheckpointCodec {
  static void save(const std::string& path, const Trainer& t);
  static std::unique_ptr<Trainer> load(const std::string& path);
};

}  // namespace disp
