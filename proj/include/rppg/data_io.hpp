#pragma once

// Dataset ingestion. Records with pre-cropped face frames arrive as
// directories of `frame_NNNNNN.png` files (zero-padded, starting at 0) plus
// physiology: PURE-style records carry a JSON file with a FullPackage array
// of {Timestamp, Value.waveform} entries, UBFC-style records carry a
// ground_truth.txt with the PPG samples on the first line and optional
// timestamps on the third. Face detection/cropping is out of scope; frames
// are expected at their final resolution.

#include "rppg/container.hpp"
#include "rppg/dsp.hpp"
#include "rppg/png_io.hpp"
#include "rppg/synth.hpp"
#include "rppg/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rppg {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset index.
// ---------------------------------------------------------------------------
struct DatasetEntry {
  std::string subject_id;
  std::string video_path;
  std::string groundtruth_path;  // empty = discover inside video_path
  double fps = 30.0;
  std::string split;  // "train" | "test"
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;

  static DatasetIndex from_json(const json& j) {
    DatasetIndex idx;
    for (const json& e : j.at("entries")) {
      DatasetEntry d;
      d.subject_id = e.at("subject_id").get<std::string>();
      d.video_path = e.at("video_path").get<std::string>();
      d.groundtruth_path = e.value("groundtruth_path", std::string{});
      d.fps = e.value("fps", 30.0);
      d.split = e.at("split").get<std::string>();
      idx.entries.push_back(std::move(d));
    }
    idx.validate();
    return idx;
  }

  static DatasetIndex load(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("dataset index: cannot open " + path.string());
    json j;
    is >> j;
    return from_json(j);
  }

  // Splits must be disjoint at the subject level.
  void validate() const {
    std::map<std::string, std::string> split_of;
    for (const DatasetEntry& e : entries) {
      if (e.split != "train" && e.split != "test")
        throw ValidationError("dataset index: split must be train|test, got '" + e.split + "'");
      auto [it, inserted] = split_of.emplace(e.subject_id, e.split);
      if (!inserted && it->second != e.split)
        throw ValidationError("dataset index: subject '" + e.subject_id + "' appears in both splits");
    }
  }

  std::vector<DatasetEntry> split(const std::string& which) const {
    std::vector<DatasetEntry> out;
    for (const DatasetEntry& e : entries)
      if (e.split == which) out.push_back(e);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Frame-folder loading.
// ---------------------------------------------------------------------------
namespace detail {

inline std::vector<fs::path> ordered_frames(const fs::path& dir) {
  static const std::regex pattern(R"(frame_(\d+)\.png)");
  std::vector<std::pair<long long, fs::path>> numbered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) numbered.emplace_back(std::stoll(m[1].str()), entry.path());
  }
  if (numbered.empty()) throw IoError("record: no frame_NNNN.png files in " + dir.string());
  std::sort(numbered.begin(), numbered.end());
  std::vector<fs::path> frames;
  frames.reserve(numbered.size());
  for (long long i = 0; i < static_cast<long long>(numbered.size()); ++i) {
    if (numbered[static_cast<std::size_t>(i)].first != i)
      throw GapError("record: missing frame index " + std::to_string(i) + " in " + dir.string(), i);
    frames.push_back(numbered[static_cast<std::size_t>(i)].second);
  }
  return frames;
}

template <class S>
Tensor<S> load_frames(const std::vector<fs::path>& frames) {
  const ImageU8 first = read_png_rgb8(frames.front());
  const Index h = first.height, w = first.width, hw = h * w;
  Tensor<S> video({static_cast<Index>(frames.size()), 3, h, w});
  S* out = video.data();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const ImageU8 img = t == 0 ? first : read_png_rgb8(frames[t]);
    if (img.height != h || img.width != w)
      throw IoError("record: frame size changed at " + frames[t].string());
    // interleaved RGB -> planar channels, normalized to [0,1]
    for (Index i = 0; i < hw; ++i)
      for (Index c = 0; c < 3; ++c)
        out[(static_cast<Index>(t) * 3 + c) * hw + i] =
            static_cast<S>(img.rgb[static_cast<std::size_t>(i * 3 + c)]) / S(255);
  }
  return video;
}

inline double fs_from_seconds(const std::vector<double>& t, double fallback) {
  if (t.size() < 2) return fallback;
  const double span = t.back() - t.front();
  if (!(span > 0.0)) return fallback;
  return static_cast<double>(t.size() - 1) / span;
}

template <class S>
Tensor<S> head_frames(const Tensor<S>& video, Index t) {
  if (t >= video.dim(0)) return video;
  const Index frame_elems = video.size() / video.dim(0);
  return Tensor<S>::from_array({t, video.dim(1), video.dim(2), video.dim(3)},
                               Eigen::Map<const ArrayX<S>>(video.data(), t * frame_elems));
}

// Preprocess a raw physiology waveform to the video rate, upsampling (with a
// warning) when the raw rate is below it.
inline Waveform condition_groundtruth(Waveform raw, double video_fps) {
  if (std::abs(raw.fs - 60.0) > 0.5)
    std::cerr << "[warn] ground-truth rate " << raw.fs << " Hz (expected 60); resampling\n";
  if (raw.fs < video_fps) {
    raw.samples = resample_linear(raw.samples, raw.fs, video_fps);
    raw.fs = video_fps;
  }
  return preprocess_groundtruth(raw, video_fps);
}

}  // namespace detail

template <class S>
struct VideoRecord {
  std::string subject_id;
  Tensor<S> video;  // [T,3,H,W]
  double fps = 30.0;
  Waveform groundtruth;  // conditioned to fps, truncated to T
};

// PURE-style record: frames plus a JSON file (named in the entry or the only
// *.json in the directory) holding FullPackage[].{Timestamp, Value.waveform};
// timestamps are nanoseconds and give the raw sampling rate.
template <class S>
VideoRecord<S> load_pure_record(const fs::path& dir, const fs::path& gt_path = {}, double fps = 30.0) {
  VideoRecord<S> rec;
  rec.fps = fps;
  rec.video = detail::load_frames<S>(detail::ordered_frames(dir));

  fs::path jpath = gt_path;
  if (jpath.empty()) {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".json") {
        jpath = entry.path();
        break;
      }
  }
  if (jpath.empty()) throw IoError("pure record: no physiology json in " + dir.string());
  std::ifstream is(jpath);
  if (!is) throw IoError("pure record: cannot open " + jpath.string());
  json j;
  is >> j;

  const json& package = j.at("FullPackage");
  VecXd samples(package.size());
  std::vector<double> tsec;
  tsec.reserve(package.size());
  for (std::size_t i = 0; i < package.size(); ++i) {
    samples[static_cast<Index>(i)] = package[i].at("Value").at("waveform").get<double>();
    if (package[i].contains("Timestamp"))
      tsec.push_back(package[i]["Timestamp"].get<double>() * 1e-9);
  }
  const double fs_raw = detail::fs_from_seconds(tsec, 60.0);
  rec.groundtruth = detail::condition_groundtruth(Waveform{samples, fs_raw}, fps);

  const Index t = std::min<Index>(rec.video.dim(0), rec.groundtruth.samples.size());
  rec.video = detail::head_frames(rec.video, t);
  rec.groundtruth.samples = rec.groundtruth.samples.head(t).eval();
  return rec;
}

// UBFC-style record: frames plus ground_truth.txt (line 1: PPG samples,
// line 2: heart rate trace (unused), line 3: timestamps in seconds).
template <class S>
VideoRecord<S> load_ubfc_record(const fs::path& dir, const fs::path& gt_path = {}, double fps = 30.0) {
  VideoRecord<S> rec;
  rec.fps = fps;
  rec.video = detail::load_frames<S>(detail::ordered_frames(dir));

  const fs::path tpath = gt_path.empty() ? dir / "ground_truth.txt" : gt_path;
  std::ifstream is(tpath);
  if (!is) throw IoError("ubfc record: cannot open " + tpath.string());
  auto read_line_values = [&is]() {
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    return v;
  };
  const std::vector<double> ppg = read_line_values();
  (void)read_line_values();  // heart-rate trace, unused
  const std::vector<double> tstamps = read_line_values();
  if (ppg.size() < 2) throw IoError("ubfc record: ground truth too short in " + tpath.string());

  VecXd samples = Eigen::Map<const VecXd>(ppg.data(), static_cast<Index>(ppg.size()));
  const double fs_raw = detail::fs_from_seconds(tstamps, 60.0);
  rec.groundtruth = detail::condition_groundtruth(Waveform{samples, fs_raw}, fps);

  const Index t = std::min<Index>(rec.video.dim(0), rec.groundtruth.samples.size());
  rec.video = detail::head_frames(rec.video, t);
  rec.groundtruth.samples = rec.groundtruth.samples.head(t).eval();
  return rec;
}

enum class DatasetKind { Pure, Ubfc };

// Bounded-parallel record loading; output order matches the entry order
// regardless of scheduling.
template <class S>
std::vector<VideoRecord<S>> load_records(const std::vector<DatasetEntry>& entries, DatasetKind kind,
                                         int threads = 1) {
  std::vector<VideoRecord<S>> out(entries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1)) {
      try {
        const DatasetEntry& e = entries[i];
        out[i] = kind == DatasetKind::Pure
                     ? load_pure_record<S>(e.video_path, e.groundtruth_path, e.fps)
                     : load_ubfc_record<S>(e.video_path, e.groundtruth_path, e.fps);
        out[i].subject_id = e.subject_id;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  threads = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

// ---------------------------------------------------------------------------
// Chunking into fixed-length aligned clips; the trailing remainder is
// dropped.
// ---------------------------------------------------------------------------
template <class S>
struct Clip {
  std::string subject_id;
  Tensor<S> video;  // [L,3,H,W]
  VecXd target;     // aligned conditioned ground truth, length L
  double fps = 30.0;
  Index clip_index = 0;
};

template <class S>
std::vector<Clip<S>> chunk_sequences(const Tensor<S>& video, const VecXd& waveform, double fps,
                                     const std::string& subject_id, Index length = 256,
                                     Index overlap = 0) {
  if (video.rank() != 4) throw ShapeError("chunk_sequences: video must be [T,3,H,W]");
  if (overlap < 0 || overlap >= length) throw ContractError("chunk_sequences: need 0 <= overlap < length");
  const Index t_total = std::min<Index>(video.dim(0), waveform.size());
  std::vector<Clip<S>> clips;
  if (t_total < length) {
    std::cerr << "[warn] sequence of " << t_total << " frames is shorter than a " << length
              << "-frame clip; skipping\n";
    return clips;
  }
  const Index stride = length - overlap;
  const Index frame_elems = video.size() / video.dim(0);
  for (Index start = 0; start + length <= t_total; start += stride) {
    Clip<S> clip;
    clip.subject_id = subject_id;
    clip.fps = fps;
    clip.clip_index = static_cast<Index>(clips.size());
    clip.video = Tensor<S>::from_array(
        {length, video.dim(1), video.dim(2), video.dim(3)},
        Eigen::Map<const ArrayX<S>>(video.data() + start * frame_elems, length * frame_elems));
    clip.target = waveform.segment(start, length);
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ---------------------------------------------------------------------------
// Waveform files: two-column text (time_seconds value) and the binary
// container variant.
// ---------------------------------------------------------------------------
inline void write_waveform_text(const fs::path& path, const Waveform& w) {
  std::ofstream os(path);
  if (!os) throw IoError("waveform: cannot open for writing: " + path.string());
  os.precision(17);
  for (Index i = 0; i < w.samples.size(); ++i)
    os << static_cast<double>(i) / w.fs << ' ' << w.samples[i] << '\n';
}

inline Waveform read_waveform_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("waveform: cannot open: " + path.string());
  std::vector<double> t, v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double a, b;
    if (ls >> a >> b) {
      t.push_back(a);
      v.push_back(b);
    }
  }
  if (v.size() < 2) throw IoError("waveform: fewer than two samples in " + path.string());
  Waveform w;
  w.samples = Eigen::Map<const VecXd>(v.data(), static_cast<Index>(v.size()));
  w.fs = detail::fs_from_seconds(t, 30.0);
  return w;
}

inline void write_waveform_binary(const fs::path& path, const Waveform& w) {
  Container c;
  c.meta["fs"] = w.fs;
  c.tensors.push_back(ContainerEntry::make<double>("samples", {w.samples.size()}, w.samples));
  c.save(path);
}

inline Waveform read_waveform_binary(const fs::path& path) {
  const Container c = Container::load(path);
  return Waveform{c.at("samples").values<double>(), c.meta_at("fs")};
}

// ---------------------------------------------------------------------------
// Synthetic cohorts on disk: one manifest JSON plus per-sample cube and
// waveform containers. True offsets can be withheld from the manifest for
// blind evaluation.
// ---------------------------------------------------------------------------
template <class S>
void save_cohort(const fs::path& dir, const std::vector<SynthSample<S>>& samples,
                 bool withhold_offsets = false) {
  fs::create_directories(dir);
  json manifest;
  manifest["samples"] = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SynthSample<S>& s = samples[i];
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%s_v%03zu", s.subject_id.c_str(), i);
    const std::string cube_name = std::string(stem) + ".cube";
    const std::string wave_name = std::string(stem) + ".wave";

    Container cube;
    cube.meta["fps"] = s.fps;
    cube.tensors.push_back(ContainerEntry::make<S>("video", s.video.shape(), s.video.array()));
    cube.save(dir / cube_name);
    write_waveform_binary(dir / wave_name, s.groundtruth);

    json e;
    e["subject_id"] = s.subject_id;
    e["video"] = cube_name;
    e["groundtruth"] = wave_name;
    e["fps"] = s.fps;
    if (!withhold_offsets && s.true_offset) e["true_offset"] = *s.true_offset;
    manifest["samples"].push_back(std::move(e));
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cohort: cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

template <class S>
std::vector<SynthSample<S>> load_cohort(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cohort: cannot open manifest " + manifest_path.string());
  json manifest;
  is >> manifest;
  const fs::path dir = manifest_path.parent_path();

  std::vector<SynthSample<S>> samples;
  for (const json& e : manifest.at("samples")) {
    SynthSample<S> s;
    s.subject_id = e.at("subject_id").get<std::string>();
    s.fps = e.at("fps").get<double>();
    if (e.contains("true_offset")) s.true_offset = e["true_offset"].get<int>();
    const Container cube = Container::load(dir / e.at("video").get<std::string>());
    const ContainerEntry& v = cube.at("video");
    s.video = Tensor<S>::from_array(v.shape, v.values<S>());
    s.groundtruth = read_waveform_binary(dir / e.at("groundtruth").get<std::string>());
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace rppg
