#include "rmtppad/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include <opencv2/imgproc.hpp>

#include "rmtppad/box_geometry.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/image_io.hpp"

namespace fs = std::filesystem;

namespace rmtppad {

void Sample::check() const {
  if (!image.defined() || image.dim() != 3 || image.size(0) != 3) throw InputError(id + ": image must be [3, H, W]");
  const auto h = height(), w = width();
  for (const auto* m : {&drivable, &lane, &lane_raw})
    if (m->height() != h || m->width() != w) throw InputError(id + ": mask size differs from image");
  if (labels.size() != boxes.size()) throw InputError(id + ": label/box count mismatch");
  for (const auto& b : boxes) {
    const bool inside = b[0] - b[2] / 2 >= -1e-9 && b[1] - b[3] / 2 >= -1e-9 && b[0] + b[2] / 2 <= 1 + 1e-9 &&
                        b[1] + b[3] / 2 <= 1 + 1e-9;
    if (!(b[2] > 0 && b[3] > 0) || !inside) throw InputError(id + ": box outside the unit square");
  }
}

namespace {

struct Scene {
  std::mt19937_64 rng;
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int64_t integer(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng); }
};

cv::Scalar rgb(double r, double g, double b) { return cv::Scalar(r, g, b); }

Sample make_scene(int64_t index, int64_t height, int64_t width, Scene& s) {
  const auto H = static_cast<int>(height), W = static_cast<int>(width);
  cv::Mat img(H, W, CV_8UC3);
  cv::Mat da(H, W, CV_8UC1, cv::Scalar(0));

  const double horizon = H * s.uniform(0.35, 0.5);
  const double vx = W * s.uniform(0.4, 0.6);
  const double top_half = W * s.uniform(0.03, 0.08);
  const double bottom_left = W * s.uniform(-0.1, 0.15);
  const double bottom_right = W * s.uniform(0.85, 1.1);

  const auto sky = rgb(s.uniform(120, 180), s.uniform(160, 210), s.uniform(200, 250));
  const auto ground = rgb(s.uniform(60, 110), s.uniform(110, 160), s.uniform(50, 90));
  const double grey = s.uniform(70, 110);
  img.setTo(ground);
  cv::rectangle(img, cv::Rect(0, 0, W, static_cast<int>(horizon)), sky, cv::FILLED);

  const std::vector<cv::Point> road{{static_cast<int>(std::lround(vx - top_half)), static_cast<int>(horizon)},
                                    {static_cast<int>(std::lround(vx + top_half)), static_cast<int>(horizon)},
                                    {static_cast<int>(std::lround(bottom_right)), H - 1},
                                    {static_cast<int>(std::lround(bottom_left)), H - 1}};
  cv::fillPoly(da, std::vector<std::vector<cv::Point>>{road}, cv::Scalar(1));
  img.setTo(rgb(grey, grey, grey), da);

  // Lane lines: fixed fractions across the road, exactly 2 px wide per row.
  BinaryMask lane_raw(height, width);
  std::vector<double> fractions{s.uniform(0.2, 0.35), s.uniform(0.65, 0.8)};
  if (s.integer(0, 1) == 1) fractions.push_back(s.uniform(0.45, 0.55));
  for (double t : fractions) {
    const double x_top = vx - top_half + t * 2 * top_half;
    const double x_bot = bottom_left + t * (bottom_right - bottom_left);
    const int y0 = static_cast<int>(horizon + (H - horizon) * s.uniform(0.05, 0.2));
    for (int y = y0; y < H; ++y) {
      const double a = (y - horizon) / (H - 1 - horizon);
      const auto x = static_cast<int64_t>(std::floor(x_top + a * (x_bot - x_top)));
      for (int64_t dx = 0; dx < 2; ++dx)
        if (x + dx >= 0 && x + dx < width) lane_raw.set(y, x + dx);
    }
  }
  const double paint = s.uniform(225, 255);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (lane_raw.at(y, x)) img.at<cv::Vec3b>(y, x) = cv::Vec3b(paint, paint, paint);

  // Vehicles, far to near so nearer ones occlude.
  struct Car {
    BoxXyxy box;
    cv::Scalar color;
  };
  std::vector<Car> cars;
  const auto wanted = s.integer(1, 4);
  for (int attempt = 0; attempt < 40 && static_cast<int64_t>(cars.size()) < wanted; ++attempt) {
    const double yb = horizon + (H - horizon) * s.uniform(0.2, 0.98);
    const double depth = (yb - horizon) / (H - horizon);
    const double bw = W * (0.08 + 0.22 * depth) * s.uniform(0.8, 1.2);
    const double bh = bw * s.uniform(0.6, 0.9);
    const double a = (yb - horizon) / (H - 1 - horizon);
    const double left = vx - top_half + a * (bottom_left - vx + top_half);
    const double right = vx + top_half + a * (bottom_right - vx - top_half);
    const double cx = s.uniform(left + bw * 0.3, std::max(left + bw * 0.3 + 1, right - bw * 0.3));
    BoxXyxy b{std::max(0.0, cx - bw / 2), std::max(0.0, yb - bh), std::min<double>(W, cx + bw / 2), yb};
    if (b[2] - b[0] < 8 || b[3] - b[1] < 8) continue;
    bool clash = false;
    for (const auto& c : cars) clash = clash || iou(c.box, b) > 0.3;
    if (clash) continue;
    const double shade = s.uniform(0.4, 1.0);
    static const std::array<cv::Scalar, 4> kPalette{rgb(200, 30, 30), rgb(30, 60, 200), rgb(30, 30, 30),
                                                   rgb(220, 200, 40)};
    cars.push_back({b, kPalette[s.integer(0, 3)] * shade});
  }
  std::sort(cars.begin(), cars.end(), [](const Car& a, const Car& b) { return a.box[3] < b.box[3]; });

  Sample out;
  for (const auto& c : cars) {
    const cv::Rect r(cv::Point(static_cast<int>(c.box[0]), static_cast<int>(c.box[1])),
                     cv::Point(static_cast<int>(std::ceil(c.box[2])), static_cast<int>(std::ceil(c.box[3]))));
    const cv::Rect rr = r & cv::Rect(0, 0, W, H);
    cv::rectangle(img, rr, c.color, cv::FILLED);
    const int band_top = rr.y + static_cast<int>(rr.height * 0.2);
    const int band_h = std::max(1, static_cast<int>(rr.height * 0.25));
    cv::rectangle(img, cv::Rect(rr.x + rr.width / 8, band_top, std::max(1, rr.width * 3 / 4), band_h),
                  rgb(40, 50, 60), cv::FILLED);
    da(rr).setTo(0);
    for (int y = rr.y; y < rr.y + rr.height; ++y)
      for (int x = rr.x; x < rr.x + rr.width; ++x) lane_raw.set(y, x, false);
    out.labels.push_back(0);
    out.boxes.push_back({(c.box[0] + c.box[2]) / 2 / W, (c.box[1] + c.box[3]) / 2 / H, (c.box[2] - c.box[0]) / W,
                         (c.box[3] - c.box[1]) / H});
  }

  // Sensor noise.
  for (int y = 0; y < H; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < W; ++x)
      for (int ch = 0; ch < 3; ++ch)
        row[x][ch] = cv::saturate_cast<uint8_t>(row[x][ch] + static_cast<int>(s.integer(-6, 6)));
  }

  std::ostringstream id;
  id << "synth_" << index;
  out.id = id.str();
  out.image = rgb_to_tensor(img);
  out.drivable = BinaryMask(height, width, std::span<const uint8_t>(da.data, da.total()));
  out.lane_raw = lane_raw;
  out.lane = dilate_mask(lane_raw);
  return out;
}

int64_t line_of_offset(const std::string& text, size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
}

}  // namespace

std::vector<Sample> generate_synthetic_dataset(int64_t n, int64_t height, int64_t width, uint64_t seed) {
  if (n < 1) throw InputError("synthetic dataset needs n >= 1");
  if (height < 32 || width < 32) throw InputError("synthetic images must be at least 32x32");
  std::vector<Sample> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(i)};
    Scene s{std::mt19937_64(seq)};
    out.push_back(make_scene(i, height, width, s));
  }
  return out;
}

bool is_vehicle_category(const std::string& category) {
  return category == "car" || category == "bus" || category == "truck" || category == "train";
}

std::vector<Sample> load_bdd_subset(const std::string& image_dir, const std::string& annotations,
                                    const std::string& da_mask_dir, const std::string& ll_mask_dir, int64_t height,
                                    int64_t width, LoadReport* report) {
  for (const auto& d : {image_dir, da_mask_dir, ll_mask_dir})
    if (!fs::is_directory(d)) throw InputError("not a directory: " + d);
  std::ifstream f(annotations);
  if (!f) throw InputError("cannot open annotations " + annotations);
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(annotations + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_array()) throw InputError(annotations + ":1: expected a list of image records");

  // name -> list of (category, x1, y1, x2, y2)
  std::map<std::string, std::vector<std::array<double, 4>>> vehicles;
  for (const auto& rec : doc) {
    const auto name_it = rec.find("name");
    if (name_it == rec.end() || !name_it->is_string()) {
      throw InputError(annotations + ": image record without a string 'name'");
    }
    const std::string name = *name_it;
    const auto line = [&] { return line_of_offset(text, text.find("\"" + name + "\"")); };
    auto& boxes = vehicles[name];
    if (!rec.contains("labels") || rec["labels"].is_null()) continue;
    if (!rec["labels"].is_array())
      throw InputError(annotations + ":" + std::to_string(line()) + ": 'labels' of " + name + " is not a list");
    for (const auto& lab : rec["labels"]) {
      if (!lab.contains("category") || !lab["category"].is_string())
        throw InputError(annotations + ":" + std::to_string(line()) + ": label without category in " + name);
      if (!is_vehicle_category(lab["category"].get<std::string>())) continue;
      const auto& b = lab.value("box2d", nlohmann::json());
      if (!b.is_object() || !b.contains("x1") || !b.contains("y1") || !b.contains("x2") || !b.contains("y2") ||
          !b["x1"].is_number() || !b["y1"].is_number() || !b["x2"].is_number() || !b["y2"].is_number())
        throw InputError(annotations + ":" + std::to_string(line()) + ": vehicle without a numeric box2d in " + name);
      boxes.push_back({b["x1"].get<double>(), b["y1"].get<double>(), b["x2"].get<double>(), b["y2"].get<double>()});
    }
  }

  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(image_dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && (ext == ".jpg" || ext == ".jpeg" || ext == ".png")) images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());

  LoadReport local;
  LoadReport& rep = report ? *report : local;
  std::vector<Sample> out;
  for (const auto& path : images) {
    const auto stem = path.stem().string();
    const auto da_path = fs::path(da_mask_dir) / (stem + ".png");
    const auto ll_path = fs::path(ll_mask_dir) / (stem + ".png");
    if (!fs::exists(da_path) || !fs::exists(ll_path)) {
      ++rep.skipped_missing_mask;
      rep.warnings.push_back("skipping " + path.filename().string() + ": missing mask");
      continue;
    }
    cv::Mat rgb = read_rgb(path.string());
    const double src_w = rgb.cols, src_h = rgb.rows;
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_LINEAR);

    Sample s;
    s.id = stem;
    s.image = rgb_to_tensor(resized);
    s.drivable = resize_mask_nearest(read_mask(da_path.string()), height, width);
    s.lane_raw = resize_mask_nearest(read_mask(ll_path.string()), height, width);
    s.lane = dilate_mask(s.lane_raw);
    auto it = vehicles.find(path.filename().string());
    if (it == vehicles.end()) {
      rep.warnings.push_back(path.filename().string() + ": no annotation record, treated as no vehicles");
    } else {
      for (const auto& b : it->second) {
        const double x1 = std::clamp(b[0] / src_w, 0.0, 1.0), y1 = std::clamp(b[1] / src_h, 0.0, 1.0);
        const double x2 = std::clamp(b[2] / src_w, 0.0, 1.0), y2 = std::clamp(b[3] / src_h, 0.0, 1.0);
        if (x2 - x1 <= 0 || y2 - y1 <= 0) continue;
        s.labels.push_back(0);
        s.boxes.push_back({(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1});
      }
    }
    s.check();
    out.push_back(std::move(s));
    ++rep.loaded;
  }
  return out;
}

std::vector<Sample> load_dataset(const RunConfig& cfg, LoadReport* report) {
  const auto h = cfg.model.encoder.input_height, w = cfg.model.encoder.input_width;
  if (cfg.data.source == "synthetic")
    return generate_synthetic_dataset(cfg.data.synthetic_count, h, w, cfg.data.synthetic_seed);
  auto out = load_bdd_subset(cfg.data.bdd_images, cfg.data.bdd_annotations, cfg.data.bdd_da_masks,
                             cfg.data.bdd_ll_masks, h, w, report);
  if (out.empty()) throw InputError("no usable samples under " + cfg.data.bdd_images);
  return out;
}

Batch collate(const std::vector<Sample>& samples, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw InputError("empty batch");
  std::vector<torch::Tensor> imgs, da, ll;
  Batch b;
  for (auto i : indices) {
    const auto& s = samples.at(i);
    imgs.push_back(s.image);
    da.push_back(mask_to_tensor(s.drivable));
    ll.push_back(mask_to_tensor(s.lane));
    ImageTargets t;
    const auto m = static_cast<int64_t>(s.boxes.size());
    t.labels = torch::tensor(s.labels, torch::kInt64).view({m});
    t.boxes = torch::zeros({m, 4});
    for (int64_t j = 0; j < m; ++j)
      for (int64_t k = 0; k < 4; ++k) t.boxes[j][k] = s.boxes[j][k];
    b.targets.push_back(t);
    b.indices.push_back(i);
  }
  b.images = torch::stack(imgs).to(torch::kFloat32).div_(255.0);
  b.drivable = torch::stack(da).unsqueeze(1).to(torch::kFloat32);
  b.lane = torch::stack(ll).unsqueeze(1).to(torch::kFloat32);
  return b;
}

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(epoch),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace rmtppad
