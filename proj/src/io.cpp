#include "disp/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace disp {

using nlohmann::json;

// ---------------------------------------------------------------- images

ImageFormat image_format_from_name(const std::string& s) {
  if (s == "pgm16") return ImageFormat::Pgm16;
  if (s == "rawf32") return ImageFormat::Rawf32;
  if (s == "ppm8") return ImageFormat::Ppm8;
  throw ConfigError("unknown image format '" + s + "'");
}

ImageFormat image_format_from_path(const std::string& path) {
  auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "pgm") return ImageFormat::Pgm16;
  if (ext == "rawf32") return ImageFormat::Rawf32;
  if (ext == "ppm") return ImageFormat::Ppm8;
  throw ConfigError("cannot infer image format from path '" + path + "'");
}

namespace {

[[noreturn]] void format_fail(const std::string& path, size_t offset, const std::string& what) {
  throw FormatError(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

// pnm header tokenizer skipping whitespace and '#' comments
struct PnmCursor {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;

  std::string token() {
    while (pos < buf.size()) {
      if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) format_fail(path, pos, "truncated header");
    return buf.substr(start, pos - start);
  }
  int number() {
    const size_t at = pos;
    try {
      return std::stoi(token());
    } catch (const std::exception&) {
      format_fail(path, at, "expected integer in header");
    }
  }
};

void put_u32le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32le(const std::string& buf, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

}  // namespace

Tensor load_image(const std::string& path, ImageFormat fmt) {
  const std::string buf = read_file(path);
  switch (fmt) {
    case ImageFormat::Pgm16: {
      PnmCursor cur{buf, path};
      if (cur.token() != "P5") format_fail(path, 0, "bad magic, expected P5");
      const int w = cur.number(), h = cur.number(), maxval = cur.number();
      if (maxval != 65535)
        format_fail(path, cur.pos, "pgm16 requires maxval 65535, got " + std::to_string(maxval));
      ++cur.pos;  // single whitespace after maxval
      const size_t need = static_cast<size_t>(w) * h * 2;
      if (buf.size() - cur.pos < need) format_fail(path, buf.size(), "truncated pixel data");
      Tensor img({1, h, w});
      for (int i = 0; i < w * h; ++i) {
        const auto hi = static_cast<unsigned char>(buf[cur.pos + 2 * i]);
        const auto lo = static_cast<unsigned char>(buf[cur.pos + 2 * i + 1]);
        img[i] = (hi * 256 + lo) / 65535.0;
      }
      return img;
    }
    case ImageFormat::Rawf32: {
      if (buf.size() < 17 || buf.compare(0, 4, "DISP") != 0)
        format_fail(path, 0, "bad magic, expected DISP");
      const auto version = static_cast<unsigned char>(buf[4]);
      if (version != 1) format_fail(path, 4, "unsupported version " + std::to_string(version));
      const uint32_t h = get_u32le(buf, 5), w = get_u32le(buf, 9), c = get_u32le(buf, 13);
      const size_t need = 17 + static_cast<size_t>(h) * w * c * 4;
      if (buf.size() < need) format_fail(path, buf.size(), "truncated pixel data");
      Tensor img({static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)});
      size_t pos = 17;
      for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
          for (uint32_t ch = 0; ch < c; ++ch, pos += 4) {
            uint32_t bits = get_u32le(buf, pos);
            float f;
            std::memcpy(&f, &bits, 4);
            img.at3(static_cast<int>(ch), static_cast<int>(y), static_cast<int>(x)) = f;
          }
      return img;
    }
    case ImageFormat::Ppm8:
      throw FormatError("ppm8 is a visual output format; loading is not supported");
  }
  throw ConfigError("bad ImageFormat");
}

void save_image(const std::string& path, const Tensor& image, ImageFormat fmt) {
  if (image.rank() != 3) throw ShapeError("save_image: image must be {C,H,W}");
  const int C = image.extent(0), H = image.extent(1), W = image.extent(2);
  std::string out;
  switch (fmt) {
    case ImageFormat::Pgm16: {
      if (C != 1) throw ShapeError("pgm16 stores a single channel, got C=" + std::to_string(C));
      out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n65535\n";
      for (int i = 0; i < H * W; ++i) {
        const double v = std::min(1.0, std::max(0.0, image[i]));
        const int q = static_cast<int>(std::lround(v * 65535.0));
        out.push_back(static_cast<char>((q >> 8) & 0xff));
        out.push_back(static_cast<char>(q & 0xff));
      }
      break;
    }
    case ImageFormat::Rawf32: {
      out = "DISP";
      out.push_back(1);
      put_u32le(out, static_cast<uint32_t>(H));
      put_u32le(out, static_cast<uint32_t>(W));
      put_u32le(out, static_cast<uint32_t>(C));
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) {
            const float f = static_cast<float>(image.at3(c, y, x));
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32le(out, bits);
          }
      break;
    }
    case ImageFormat::Ppm8: {
      if (C != 1 && C != 3) throw ShapeError("ppm8 needs 1 or 3 channels");
      out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c) {
            const double v = std::min(1.0, std::max(0.0, image.at3(C == 1 ? 0 : c, y, x)));
            out.push_back(static_cast<char>(std::lround(v * 255.0)));
          }
      break;
    }
  }
  write_file(path, out);
}

// ---------------------------------------------------------------- config

namespace {

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown config key '" + path + "." + it.key() + "'");
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

StageSpec parse_stage(const json& j, const std::string& path) {
  reject_unknown(j, {"kind", "bounds", "init_preact"}, path);
  if (!j.contains("kind")) throw ConfigError(path + ": stage needs a 'kind'");
  StageSpec st;
  st.kind = isp_kind_from_name(j.at("kind").get<std::string>());
  st.specs = default_param_specs(st.kind);
  st.default_preact.assign(st.specs.size(), 0.0);

  auto find_param = [&](const std::string& name) -> size_t {
    for (size_t i = 0; i < st.specs.size(); ++i)
      if (st.specs[i].name == name) return i;
    throw ConfigError(path + ": " + isp_kind_name(st.kind) + " has no parameter '" + name + "'");
  };
  if (j.contains("bounds")) {
    for (auto it = j.at("bounds").begin(); it != j.at("bounds").end(); ++it) {
      const auto arr = it.value().get<std::vector<double>>();
      if (arr.size() != 2) throw ConfigError(path + ".bounds." + it.key() + ": expected [min,max]");
      const size_t i = find_param(it.key());
      st.specs[i].p_min = arr[0];
      st.specs[i].p_max = arr[1];
      st.specs[i].validate();
    }
  }
  if (j.contains("init_preact")) {
    for (auto it = j.at("init_preact").begin(); it != j.at("init_preact").end(); ++it)
      st.default_preact[find_param(it.key())] = it.value().get<double>();
  }
  return st;
}

json stage_to_json(const StageSpec& st) {
  json bounds = json::object(), init = json::object();
  for (size_t i = 0; i < st.specs.size(); ++i) {
    bounds[st.specs[i].name] = {st.specs[i].p_min, st.specs[i].p_max};
    init[st.specs[i].name] = st.default_preact[i];
  }
  return json{{"kind", isp_kind_name(st.kind)}, {"bounds", bounds}, {"init_preact", init}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  reject_unknown(j, {"pipeline", "controller", "trainer", "synth", "net"}, "$");

  RunConfig cfg = default_run_config();
  if (j.contains("pipeline")) {
    cfg.pipeline.stages.clear();
    int i = 0;
    for (const json& js : j.at("pipeline"))
      cfg.pipeline.stages.push_back(parse_stage(js, "$.pipeline[" + std::to_string(i++) + "]"));
  }
  cfg.pipeline.validate();

  if (j.contains("controller")) {
    const json& c = j.at("controller");
    reject_unknown(c, {"mode", "latent_update", "latent_width", "sfb_channels", "sfb_fc_width",
                       "update_hidden"},
                   "$.controller");
    std::string mode = control_mode_name(cfg.controller.mode);
    maybe(c, "mode", mode);
    cfg.controller.mode = control_mode_from_name(mode);
    maybe(c, "latent_update", cfg.controller.latent_update);
    maybe(c, "latent_width", cfg.controller.latent_width);
    maybe(c, "sfb_channels", cfg.controller.sfb_channels);
    maybe(c, "sfb_fc_width", cfg.controller.sfb_fc_width);
    maybe(c, "update_hidden", cfg.controller.update_hidden);
  }

  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    reject_unknown(t,
                   {"epochs_phase1", "epochs_phase2", "lr_max", "lr_min", "warmup_steps",
                    "controller_lr_mult", "p_hat_lr_mult", "batch_size", "seed", "init_strategy",
                    "init_burnin_steps", "buffer_capacity", "ma_decay", "train_images",
                    "test_images", "seq_blend"},
                   "$.trainer");
    maybe(t, "epochs_phase1", cfg.trainer.epochs_phase1);
    maybe(t, "epochs_phase2", cfg.trainer.epochs_phase2);
    maybe(t, "lr_max", cfg.trainer.lr_max);
    maybe(t, "lr_min", cfg.trainer.lr_min);
    maybe(t, "warmup_steps", cfg.trainer.warmup_steps);
    maybe(t, "controller_lr_mult", cfg.trainer.controller_lr_mult);
    maybe(t, "p_hat_lr_mult", cfg.trainer.p_hat_lr_mult);
    maybe(t, "batch_size", cfg.trainer.batch_size);
    maybe(t, "seed", cfg.trainer.seed);
    std::string strat = init_strategy_name(cfg.trainer.init_strategy);
    maybe(t, "init_strategy", strat);
    cfg.trainer.init_strategy = init_strategy_from_name(strat);
    maybe(t, "init_burnin_steps", cfg.trainer.init_burnin_steps);
    maybe(t, "buffer_capacity", cfg.trainer.buffer_capacity);
    maybe(t, "ma_decay", cfg.trainer.ma_decay);
    maybe(t, "train_images", cfg.trainer.train_images);
    maybe(t, "test_images", cfg.trainer.test_images);
    maybe(t, "seq_blend", cfg.trainer.seq_blend);
    cfg.trainer.validate();
  }

  if (j.contains("synth")) {
    const json& s = j.at("synth");
    reject_unknown(s,
                   {"height", "width", "channels", "num_classes", "exposure_min", "exposure_max",
                    "scene_gamma_min", "scene_gamma_max", "read_noise_min", "read_noise_max",
                    "shot_noise_gain_min", "shot_noise_gain_max", "quant_bits", "seed"},
                   "$.synth");
    maybe(s, "height", cfg.synth.height);
    maybe(s, "width", cfg.synth.width);
    maybe(s, "channels", cfg.synth.channels);
    maybe(s, "num_classes", cfg.synth.num_classes);
    maybe(s, "exposure_min", cfg.synth.exposure_min);
    maybe(s, "exposure_max", cfg.synth.exposure_max);
    maybe(s, "scene_gamma_min", cfg.synth.scene_gamma_min);
    maybe(s, "scene_gamma_max", cfg.synth.scene_gamma_max);
    maybe(s, "read_noise_min", cfg.synth.read_noise_min);
    maybe(s, "read_noise_max", cfg.synth.read_noise_max);
    maybe(s, "shot_noise_gain_min", cfg.synth.shot_noise_gain_min);
    maybe(s, "shot_noise_gain_max", cfg.synth.shot_noise_gain_max);
    maybe(s, "quant_bits", cfg.synth.quant_bits);
    maybe(s, "seed", cfg.synth.seed);
    cfg.synth.validate();
  }

  if (j.contains("net")) {
    const json& n = j.at("net");
    reject_unknown(n, {"c1", "c2", "c3"}, "$.net");
    maybe(n, "c1", cfg.net.c1);
    maybe(n, "c2", cfg.net.c2);
    maybe(n, "c3", cfg.net.c3);
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json pipeline = json::array();
  for (const StageSpec& st : cfg.pipeline.stages) pipeline.push_back(stage_to_json(st));

  json j{
      {"pipeline", pipeline},
      {"controller",
       {{"mode", control_mode_name(cfg.controller.mode)},
        {"latent_update", cfg.controller.latent_update},
        {"latent_width", cfg.controller.latent_width},
        {"sfb_channels", cfg.controller.sfb_channels},
        {"sfb_fc_width", cfg.controller.sfb_fc_width},
        {"update_hidden", cfg.controller.update_hidden}}},
      {"trainer",
       {{"epochs_phase1", cfg.trainer.epochs_phase1},
        {"epochs_phase2", cfg.trainer.epochs_phase2},
        {"lr_max", cfg.trainer.lr_max},
        {"lr_min", cfg.trainer.lr_min},
        {"warmup_steps", cfg.trainer.warmup_steps},
        {"controller_lr_mult", cfg.trainer.controller_lr_mult},
        {"p_hat_lr_mult", cfg.trainer.p_hat_lr_mult},
        {"batch_size", cfg.trainer.batch_size},
        {"seed", cfg.trainer.seed},
        {"init_strategy", init_strategy_name(cfg.trainer.init_strategy)},
        {"init_burnin_steps", cfg.trainer.init_burnin_steps},
        {"buffer_capacity", cfg.trainer.buffer_capacity},
        {"ma_decay", cfg.trainer.ma_decay},
        {"train_images", cfg.trainer.train_images},
        {"test_images", cfg.trainer.test_images},
        {"seq_blend", cfg.trainer.seq_blend}}},
      {"synth",
       {{"height", cfg.synth.height},
        {"width", cfg.synth.width},
        {"channels", cfg.synth.channels},
        {"num_classes", cfg.synth.num_classes},
        {"exposure_min", cfg.synth.exposure_min},
        {"exposure_max", cfg.synth.exposure_max},
        {"scene_gamma_min", cfg.synth.scene_gamma_min},
        {"scene_gamma_max", cfg.synth.scene_gamma_max},
        {"read_noise_min", cfg.synth.read_noise_min},
        {"read_noise_max", cfg.synth.read_noise_max},
        {"shot_noise_gain_min", cfg.synth.shot_noise_gain_min},
        {"shot_noise_gain_max", cfg.synth.shot_noise_gain_max},
        {"quant_bits", cfg.synth.quant_bits},
        {"seed", cfg.synth.seed}}},
      {"net", {{"c1", cfg.net.c1}, {"c2", cfg.net.c2}, {"c3", cfg.net.c3}}}};
  return j.dump(2);
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kCkptMagic[4] = {'D', 'S', 'P', 'C'};
constexpr uint8_t kCkptVersion = 1;

void put_f64le(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64le(const std::string& buf, size_t pos) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void put_vec(std::string& out, const std::vector<double>& v) {
  for (double d : v) put_f64le(out, d);
}

std::vector<double> get_vec(const std::string& buf, size_t& pos, size_t n) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i, pos += 8) v[i] = get_f64le(buf, pos);
  return v;
}

}  // namespace

void CheckpointCodec::save(const std::string& path, const Trainer& t) {
  json manifest;
  manifest["config"] = json::parse(run_config_to_json(t.config()));

  json tensors = json::array();
  std::string payload;
  auto dump_map = [&](const std::map<std::string, Tensor>& m, const std::string& ns) {
    for (const auto& [name, ten] : m) {
      tensors.push_back({{"name", ns + name}, {"shape", ten.shape}});
      put_vec(payload, ten.data);
    }
  };
  dump_map(t.store_.values, "p/");
  dump_map(t.opt_.m, "m/");
  dump_map(t.opt_.v, "v/");

  const InitBuffer& buf = t.buffer_;
  const size_t P = buf.raw_mean().size();
  manifest["opt"] = {{"step", t.opt_.step},
                     {"lr_max", t.opt_.cfg.lr_max},
                     {"lr_min", t.opt_.cfg.lr_min},
                     {"warmup_steps", t.opt_.cfg.warmup_steps},
                     {"total_steps", t.opt_.cfg.total_steps}};
  manifest["buffer"] = {{"ring_len", buf.contents().size()},
                        {"param_dim", P},
                        {"push_count", buf.push_count()}};
  std::ostringstream rngss;
  rngss << t.rng_;
  manifest["rng"] = rngss.str();
  manifest["tensors"] = tensors;
  manifest["version"] = kCkptVersion;

  for (const auto& v : buf.contents()) put_vec(payload, v);
  put_vec(payload, buf.raw_mean());
  put_vec(payload, buf.raw_m2());
  put_vec(payload, buf.moving_average());

  const std::string mstr = manifest.dump();
  std::string out(kCkptMagic, 4);
  out.push_back(static_cast<char>(kCkptVersion));
  put_u32le(out, static_cast<uint32_t>(mstr.size()));
  out += mstr;
  out += payload;
  write_file(path, out);
}

std::unique_ptr<Trainer> CheckpointCodec::load(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 9 || std::memcmp(buf.data(), kCkptMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic (byte offset 0)");
  if (static_cast<unsigned char>(buf[4]) != kCkptVersion)
    throw FormatError(path + ": unsupported checkpoint version (byte offset 4)");
  const uint32_t mlen = get_u32le(buf, 5);
  if (buf.size() < 9 + mlen) throw FormatError(path + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(buf.substr(9, mlen));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": manifest parse error: " + e.what());
  }

  RunConfig cfg = parse_run_config(manifest.at("config").dump());
  auto trainer = std::make_unique<Trainer>(cfg);

  size_t pos = 9 + mlen;
  auto need = [&](size_t n) {
    if (buf.size() < pos + 8 * n) throw FormatError(path + ": truncated payload");
  };
  for (const json& jt : manifest.at("tensors")) {
    const std::string full = jt.at("name").get<std::string>();
    const auto shape = jt.at("shape").get<std::vector<int>>();
    Tensor ten(shape);
    need(ten.data.size());
    ten.data = get_vec(buf, pos, ten.data.size());
    const std::string ns = full.substr(0, 2);
    const std::string name = full.substr(2);
    if (ns == "p/") {
      trainer->store_.get(name) = std::move(ten);  // verifies the name exists
    } else if (ns == "m/") {
      trainer->opt_.m[name] = std::move(ten);
    } else if (ns == "v/") {
      trainer->opt_.v[name] = std::move(ten);
    } else {
      throw FormatError(path + ": unknown tensor namespace '" + ns + "'");
    }
  }

  const json& jo = manifest.at("opt");
  trainer->opt_.step = jo.at("step").get<int>();
  trainer->opt_.cfg.lr_max = jo.at("lr_max").get<double>();
  trainer->opt_.cfg.lr_min = jo.at("lr_min").get<double>();
  trainer->opt_.cfg.warmup_steps = jo.at("warmup_steps").get<int>();
  trainer->opt_.cfg.total_steps = jo.at("total_steps").get<int>();

  const json& jb = manifest.at("buffer");
  const size_t ring_len = jb.at("ring_len").get<size_t>();
  const size_t P = jb.at("param_dim").get<size_t>();
  std::deque<std::vector<double>> ring;
  for (size_t i = 0; i < ring_len; ++i) {
    need(P);
    ring.push_back(get_vec(buf, pos, P));
  }
  need(3 * P);
  std::vector<double> mean = get_vec(buf, pos, P);
  std::vector<double> m2 = get_vec(buf, pos, P);
  std::vector<double> ma = get_vec(buf, pos, P);
  trainer->buffer_.restore(std::move(ring), std::move(mean), std::move(m2), std::move(ma),
                           jb.at("push_count").get<int64_t>());

  std::istringstream rngss(manifest.at("rng").get<std::string>());
  rngss >> trainer->rng_;
  return trainer;
}

void save_checkpoint(const std::string& path, const Trainer& trainer) {
  CheckpointCodec::save(path, trainer);
}

std::unique_ptr<Trainer> load_checkpoint(const std::string& path) {
  return CheckpointCodec::load(path);
}

}  // namespace disp
