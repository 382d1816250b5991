// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <sys/socket.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <boost/asio.hpp>
#include <chrono>
#include <csignal>
#include <cstring>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "voxstream/app/frame_service.hpp"
#include "voxstream/app/pipeline.hpp"
#include "voxstream/app/png.hpp"
#include "voxstream/app/settings_file.hpp"
#include "voxstream/ingest/bulk.hpp"
#include "voxstream/ingest/descriptor_file.hpp"
#include "voxstream/ingest/stream.hpp"

namespace voxstream::cli {

namespace {

namespace net = boost::asio;
using tcp = net::ip::tcp;

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

Vec3u parse_brick(const std::string& s) {
  std::vector<std::uint32_t> v;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      v.push_back(static_cast<std::uint32_t>(std::stoul(part)));
    } catch (const std::exception&) {
      throw ConfigError("bad brick size '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ConfigError("brick size is N or X,Y,Z");
}

// RAM page budget from the environment, in pages of the given size; nullopt when unset.
std::optional<std::uint32_t> cache_pages(std::size_t page_bytes) {
  const char* env = std::getenv(kCacheEnv);
  if (!env || !*env) return std::nullopt;
  char* end = nullptr;
  const double mb = std::strtod(env, &end);
  if (end == env || *end != '\0' || !(mb > 0.0)) throw ConfigError(std::string(kCacheEnv) + " must be a positive number");
  const double pages = mb * 1048576.0 / double(page_bytes);
  return static_cast<std::uint32_t>(std::clamp(pages, 2.0, 4.0e9));
}

std::unique_ptr<core::Octree> open_store(const std::string& dir, std::optional<std::uint32_t> ram_pages) {
  auto t = core::Octree::open(dir, ram_pages);
  if (ram_pages) return t;
  const std::size_t page_bytes = t->layout().brick_bytes() * t->store().page_bricks();
  if (auto env = cache_pages(page_bytes)) return core::Octree::open(dir, env);
  return t;
}

struct PoolFlags {
  std::string brick;
  std::optional<std::uint32_t> threshold;
  std::uint32_t page_bricks = 64;
  std::uint32_t ram_pages = 64;

  void add(CLI::App* cmd) {
    cmd->add_option("--brick", brick, "brick size N or X,Y,Z (default 64)");
    cmd->add_option("--threshold", threshold, "homogeneity threshold in sample units (default 5% of range, 0 = no pruning)");
    cmd->add_option("--page-bricks", page_bricks, "bricks per page")->capture_default_str();
    cmd->add_option("--ram-pages", ram_pages, "pages held in RAM while building")->capture_default_str();
  }
  core::BrickPoolConfig config(SampleFormat f) const {
    core::BrickPoolConfig cfg = core::BrickPoolConfig::defaults_for(f);
    if (!brick.empty()) cfg.brick_dims = parse_brick(brick);
    if (threshold) cfg.homogeneity_threshold = *threshold;
    cfg.page_bricks = page_bricks;
    cfg.ram_page_limit = ram_pages;
    return cfg;
  }
};

struct DeviceFlags {
  double buffer_mb = 512.0;
  double budget_ms = 150.0;
  void add(CLI::App* cmd) {
    cmd->add_option("--buffer-mb", buffer_mb, "brick buffer size in MiB")->capture_default_str();
    cmd->add_option("--budget-ms", budget_ms, "upload time budget per frame")->capture_default_str();
  }
  device::DeviceConfig config() const {
    if (!(buffer_mb > 0.0)) throw ConfigError("--buffer-mb must be positive");
    return {static_cast<std::uint64_t>(buffer_mb * 1048576.0), budget_ms};
  }
};

struct ViewFlags {
  std::string settings;
  std::string mode;
  int width = 0, height = 0;
  void add(CLI::App* cmd) {
    cmd->add_option("--settings", settings, "view settings file (key = value)");
    cmd->add_option("--mode", mode, "dvr or mip (overrides the settings file)");
    cmd->add_option("--width", width, "image width (overrides the settings file)");
    cmd->add_option("--height", height, "image height (overrides the settings file)");
  }
  render::Scene scene(const core::VolumeDescriptor& d) const {
    app::SettingsFile sf = settings.empty() ? app::SettingsFile{} : app::read_settings(settings);
    if (!mode.empty()) {
      if (mode == "dvr") {
        sf.scene.settings.mode = render::Mode::DVR;
      } else if (mode == "mip") {
        sf.scene.settings.mode = render::Mode::MIP;
      } else {
        throw ConfigError("--mode must be dvr or mip");
      }
    }
    if (width > 0) sf.scene.camera.width = width;
    if (height > 0) sf.scene.camera.height = height;
    return app::resolve_scene(sf, d);
  }
};

std::pair<std::string, unsigned short> parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint must be host:port");
  try {
    return {s.substr(0, colon), static_cast<unsigned short>(std::stoul(s.substr(colon + 1)))};
  } catch (const std::exception&) {
    throw ConfigError("bad port in '" + s + "'");
  }
}

// Sends a raw volume as a slab stream, slab_depth z-slices per slab, channel by channel within a slab.
ingest::StreamReport send_source(const ingest::RawVolumeSource& src, ByteSink& sink, std::uint32_t slab_depth,
                                 double slabs_per_second, std::uint32_t stop_after, std::ostream& out) {
  src.validate();
  const auto start = std::chrono::steady_clock::now();
  const core::VolumeDescriptor& d = src.descriptor;
  const std::size_t sb = sample_bytes(d.format);
  const std::size_t slice_bytes = std::size_t(d.dims.x) * d.dims.y * sb;
  const std::uint32_t depth = std::max<std::uint32_t>(1, slab_depth);
  ingest::StreamWriter w(sink);
  w.header(d);
  std::vector<std::ifstream> files;
  for (const auto& f : src.files) files.emplace_back(f, std::ios::binary);
  ingest::StreamReport rep;
  std::vector<std::byte> payload, raw;
  for (std::uint32_t z0 = 0; z0 < d.dims.z; z0 += depth) {
    if (g_interrupted) break;
    const std::uint32_t dz = std::min(depth, d.dims.z - z0);
    if (stop_after && rep.frames >= stop_after) {
      w.abort();
      rep.end = ingest::StreamEnd::Abort;
      rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return rep;
    }
    for (int c = 0; c < d.channels; ++c) {
      payload.resize(slice_bytes * dz);
      if (!src.interleaved) {
        files[std::size_t(c)].seekg(static_cast<std::streamoff>(slice_bytes * z0));
        files[std::size_t(c)].read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
      } else {
        raw.resize(payload.size() * std::size_t(d.channels));
        files[0].seekg(static_cast<std::streamoff>(slice_bytes * d.channels * z0));
        files[0].read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        const std::size_t n = payload.size() / sb;
        for (std::size_t i = 0; i < n; ++i)
          std::memcpy(payload.data() + i * sb, raw.data() + (i * std::size_t(d.channels) + std::size_t(c)) * sb, sb);
      }
      w.slab(c, {0, 0, z0}, {d.dims.x, d.dims.y, dz}, payload);
      ++rep.frames;
      rep.payload_bytes += payload.size();
    }
    if (slabs_per_second > 0.0)
      std::this_thread::sleep_for(std::chrono::duration<double>(1.0 / slabs_per_second));
  }
  w.end();
  rep.end = ingest::StreamEnd::End;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "sent " << rep.frames << " slabs\n";
  return rep;
}

// Socket byte source that reports EOF once shut down.
struct SocketIo {
  tcp::socket socket;
  std::unique_ptr<FdSource> source;
  std::unique_ptr<FdSink> sink;
  explicit SocketIo(tcp::socket s) : socket(std::move(s)) {
    source = std::make_unique<FdSource>(socket.native_handle());
    sink = std::make_unique<FdSink>(socket.native_handle());
  }
  void shutdown() { ::shutdown(socket.native_handle(), SHUT_RDWR); }
};

int cmd_build(const std::string& source, const std::string& out_dir, const PoolFlags& pool, std::uint32_t slab_depth,
              std::ostream& out) {
  const ingest::RawVolumeSource src = ingest::read_source(source);
  const ingest::BuildReport r = app::build_store(src, pool.config(src.descriptor.format), out_dir, slab_depth);
  out << r.summary() << "\n";
  return 0;
}

int cmd_render(const std::string& store, const ViewFlags& view, const DeviceFlags& dev, const std::string& out_png,
               const std::string& fullframe_png, int max_passes, std::ostream& out) {
  auto tree = open_store(store, std::nullopt);
  const render::Scene scene = view.scene(tree->descriptor());
  const app::RenderRun run = app::render_store(*tree, scene, dev.config(), max_passes);
  app::write_png(out_png, run.image);
  if (!fullframe_png.empty()) app::write_png(fullframe_png, run.fullframe);
  out << run.summary() << "\n";
  return 0;
}

int cmd_bench(const std::string& store, const ViewFlags& view, const DeviceFlags& dev, app::BenchOptions opt,
              std::optional<std::uint32_t> ram_pages, std::ostream& out) {
  auto tree = open_store(store, ram_pages);
  const render::Scene scene = view.scene(tree->descriptor());
  const core::VolumeDescriptor& d = tree->descriptor();
  opt.centre = {0.5 * d.dims.x * d.spacing.x, 0.5 * d.dims.y * d.spacing.y, 0.5 * d.dims.z * d.spacing.z};
  const app::BenchReport r = app::run_bench(*tree, scene, dev.config(), opt);
  out << r.summary() << "\n";
  return 0;
}

struct ServeFlags {
  std::string store;
  std::string ingest_listen;
  std::string work_dir;
  std::string save_dir;
  std::string listen = "127.0.0.1:8700";
  double duration_s = 0.0;
  std::string port_file;
};

int cmd_serve(const ServeFlags& f, const ViewFlags& view, const DeviceFlags& dev, const PoolFlags& pool,
              std::ostream& out) {
  if (f.store.empty() == f.ingest_listen.empty()) throw ConfigError("serve needs exactly one of --store or --ingest-listen");
  const auto [host, port] = parse_endpoint(f.listen);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::unique_ptr<core::Octree> tree;
  std::unique_ptr<SocketIo> link;
  net::io_context io;
  if (!f.store.empty()) {
    tree = open_store(f.store, std::nullopt);
  } else {
    const auto [ihost, iport] = parse_endpoint(f.ingest_listen);
    tcp::acceptor acc(io, {net::ip::make_address(ihost), iport});
    out << "waiting for a slab stream on " << ihost << ":" << acc.local_endpoint().port() << std::endl;
    link = std::make_unique<SocketIo>(acc.accept());
    const core::VolumeDescriptor d = ingest::read_stream_header(*link->source);
    const std::filesystem::path work =
        f.work_dir.empty() ? std::filesystem::temp_directory_path() / "voxstream-live.vxbp" : std::filesystem::path(f.work_dir);
    std::filesystem::remove(work);
    tree = core::Octree::create(d, pool.config(d.format), work);
  }

  app::ServiceOptions opt;
  opt.address = host;
  opt.port = port;
  opt.device = dev.config();
  opt.view.scene = view.scene(tree->descriptor());
  opt.view.policy = app::StrategyPolicy::Auto;
  app::FrameService svc(*tree, opt);

  std::optional<ingest::StreamIngestor> ing;
  std::thread ingest_thread;
  std::atomic<bool> ingest_done{false};
  if (link) {
    ing.emplace(*tree);
    svc.set_ingest_state("running");
    svc.set_abort_handler([&] {
      ing->request_abort();
      link->shutdown();
    });
    ingest_thread = std::thread([&] {
      const ingest::StreamReport r = ing->run(*link->source, link->sink.get());
      svc.set_ingest_state(r.end == ingest::StreamEnd::End ? "finished" : "aborted");
      out << "ingest: " << r.summary() << std::endl;
      ingest_done = true;
    });
  }
  const unsigned short bound = svc.start();
  out << "serving on ws://" << host << ":" << bound << "/" << std::endl;
  if (!f.port_file.empty()) std::ofstream(f.port_file) << bound << "\n";
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    if (f.duration_s > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= f.duration_s)
      break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (ingest_thread.joinable()) {
    if (!ingest_done) {
      ing->request_abort();
      link->shutdown();
    }
    ingest_thread.join();
  }
  svc.stop();
  const app::ServiceCounters k = svc.counters();
  out << "frames_rendered=" << k.frames_rendered << " frames_sent=" << k.frames_sent
      << " frames_dropped=" << k.frames_dropped << " control_messages=" << k.control_messages << " nacks=" << k.nacks
      << "\n";
  if (!f.save_dir.empty()) {
    tree->save(f.save_dir);
    out << "saved " << f.save_dir << "\n";
  }
  return 0;
}

struct IngestFlags {
  std::string source;
  std::string to;     // host:port
  std::string write;  // stream file
  std::string from;   // stream file or - for stdin
  std::string store;  // output store for --from
  std::uint32_t slab_depth = 1;
  double rate = 0.0;
  std::uint32_t abort_after = 0;
};

int cmd_ingest(const IngestFlags& f, const PoolFlags& pool, std::ostream& out) {
  const int modes = int(!f.to.empty()) + int(!f.write.empty()) + int(!f.from.empty());
  if (modes != 1) throw ConfigError("ingest needs exactly one of --to, --write or --from");
  if (!f.from.empty()) {
    if (f.store.empty()) throw ConfigError("--from needs --store");
    std::ifstream file;
    std::unique_ptr<ByteSource> src;
    if (f.from == "-") {
      src = std::make_unique<FdSource>(0);
    } else {
      file.open(f.from, std::ios::binary);
      if (!file) throw IoError("cannot open " + f.from);
      src = std::make_unique<IstreamSource>(file);
    }
    const core::VolumeDescriptor d = ingest::read_stream_header(*src);
    std::filesystem::create_directories(f.store);
    const auto work = std::filesystem::path(f.store) / "build.tmp.vxbp";
    std::filesystem::remove(work);
    ingest::StreamReport r;
    {
      auto tree = core::Octree::create(d, pool.config(d.format), work);
      ingest::StreamIngestor ing(*tree);
      r = ing.run(*src);
      tree->save(f.store);
      out << r.summary() << "\n" << ingest::BuildReport{r.seconds, r.accepted, tree->stats()}.summary() << "\n";
    }
    std::filesystem::remove(work);
    return r.end == ingest::StreamEnd::Malformed ? 3 : 0;
  }
  if (f.source.empty()) throw ConfigError("--to and --write need --source");
  const ingest::RawVolumeSource src = ingest::read_source(f.source);
  if (!f.write.empty()) {
    std::ofstream file(f.write, std::ios::binary);
    if (!file) throw IoError("cannot create " + f.write);
    OstreamSink sink(file);
    send_source(src, sink, f.slab_depth, f.rate, f.abort_after, out);
    sink.flush();
    return 0;
  }
  const auto [host, port] = parse_endpoint(f.to);
  net::io_context io;
  tcp::socket sock(io);
  sock.connect({net::ip::make_address(host), port});
  SocketIo link(std::move(sock));
  std::uint64_t acks = 0, nacks = 0;
  std::thread ack_reader([&] {
    while (auto a = ingest::read_ack(*link.source)) (a->ok ? acks : nacks)++;
  });
  bool closed_early = false;
  try {
    send_source(src, *link.sink, f.slab_depth, f.rate, f.abort_after, out);
    link.sink->flush();
  } catch (const IoError&) {
    closed_early = true;
  }
  ::shutdown(link.socket.native_handle(), SHUT_WR);
  ack_reader.join();
  out << "acks=" << acks << " nacks=" << nacks << "\n";
  if (closed_early) {
    out << "receiver closed the stream\n";
    return 5;
  }
  return nacks ? 4 : 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"voxstream: out-of-core multi-channel volume engine"};
  app.require_subcommand(1);

  PoolFlags pool;
  DeviceFlags dev;
  ViewFlags view;

  auto* build = app.add_subcommand("build", "build a brick-pool store from raw volume files");
  std::string source, out_dir;
  std::uint32_t slab_depth = 0;
  build->add_option("--source", source, "volume descriptor file")->required();
  build->add_option("--out", out_dir, "output store directory")->required();
  build->add_option("--slab-depth", slab_depth, "z-slices per inserted slab (0 = brick height)");
  pool.add(build);

  auto* render = app.add_subcommand("render", "render a store: one full frame, then refinement to completion");
  std::string store, out_png, fullframe_png;
  int max_passes = 100000;
  render->add_option("--store", store, "store directory")->required();
  render->add_option("--out", out_png, "output PNG")->required();
  render->add_option("--fullframe-out", fullframe_png, "also write the first full-frame image");
  render->add_option("--max-passes", max_passes, "refinement pass limit")->capture_default_str();
  view.add(render);
  dev.add(render);

  auto* bench = app.add_subcommand("bench", "time a 360-degree orbit of full-frame passes");
  app::BenchOptions bopt;
  std::optional<std::uint32_t> bench_ram_pages;
  bench->add_option("--store", store, "store directory")->required();
  bench->add_option("--frames", bopt.frames, "frames per revolution")->capture_default_str();
  bench->add_option("--warmup", bopt.warmup_revolutions, "revolutions before measuring")->capture_default_str();
  bench->add_option("--distance", bopt.distance, "orbit radius (default: camera distance to the centre)");
  bench->add_option("--elevation", bopt.elevation, "orbit elevation in radians")->capture_default_str();
  bench->add_option("--ram-pages", bench_ram_pages, "cap the store's RAM pages (forces disk paging)");
  view.add(bench);
  dev.add(bench);

  auto* serve = app.add_subcommand("serve", "interactive frame service over WebSocket");
  ServeFlags sf;
  serve->add_option("--store", sf.store, "store directory");
  serve->add_option("--ingest-listen", sf.ingest_listen, "host:port to accept one live slab stream on");
  serve->add_option("--work", sf.work_dir, "working brick pool file for a live ingest");
  serve->add_option("--save", sf.save_dir, "save the tree here on shutdown");
  serve->add_option("--listen", sf.listen, "WebSocket host:port (port 0 = any)")->capture_default_str();
  serve->add_option("--duration", sf.duration_s, "stop after this many seconds (0 = until interrupted)");
  serve->add_option("--port-file", sf.port_file, "write the bound port here");
  view.add(serve);
  dev.add(serve);
  PoolFlags serve_pool;
  serve_pool.add(serve);

  auto* ingest_cmd = app.add_subcommand("ingest", "send a raw volume as a slab stream, or build a store from one");
  IngestFlags inf;
  ingest_cmd->add_option("--source", inf.source, "volume descriptor file to send");
  ingest_cmd->add_option("--to", inf.to, "send to host:port");
  ingest_cmd->add_option("--write", inf.write, "write the stream to a file");
  ingest_cmd->add_option("--from", inf.from, "read a stream file (- = stdin) into --store");
  ingest_cmd->add_option("--store", inf.store, "output store directory for --from");
  ingest_cmd->add_option("--slab-depth", inf.slab_depth, "z-slices per slab")->capture_default_str();
  ingest_cmd->add_option("--rate", inf.rate, "slabs per second (0 = as fast as possible)");
  ingest_cmd->add_option("--abort-after", inf.abort_after, "send an abort frame after this many slab frames");
  PoolFlags ingest_pool;
  ingest_pool.add(ingest_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (*build) return cmd_build(source, out_dir, pool, slab_depth, out);
    if (*render) return cmd_render(store, view, dev, out_png, fullframe_png, max_passes, out);
    if (*bench) return cmd_bench(store, view, dev, bopt, bench_ram_pages, out);
    if (*serve) return cmd_serve(sf, view, dev, serve_pool, out);
    if (*ingest_cmd) return cmd_ingest(inf, ingest_pool, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace voxstream::cli
