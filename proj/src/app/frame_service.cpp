// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/app/frame_service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "voxstream/app/png.hpp"
#include "voxstream/ingest/stream.hpp"
#include "voxstream/render/session.hpp"

namespace voxstream::app {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

void encode_frame_header(const FrameHeader& h, std::uint8_t* out) {
  const std::uint32_t v[4] = {h.frame_id, h.width, h.height, h.format};
  for (int i = 0; i < 4; ++i)
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(v[i] >> (8 * b));
}

FrameHeader decode_frame_header(const std::uint8_t* in) {
  std::uint32_t v[4];
  for (int i = 0; i < 4; ++i) {
    v[i] = 0;
    for (int b = 0; b < 4; ++b) v[i] |= std::uint32_t(in[i * 4 + b]) << (8 * b);
  }
  return {v[0], v[1], v[2], v[3]};
}

namespace {

using Payload = std::shared_ptr<const std::string>;

class Session;

}  // namespace

struct FrameService::Impl {
  core::Octree& tree;
  ServiceOptions opt;
  net::io_context io;
  tcp::acceptor acceptor{io};
  std::thread io_thread, render_thread;

  mutable std::mutex m;
  std::condition_variable cv;
  ViewState view;
  std::uint64_t view_version = 0;
  std::uint64_t reset_version = 0;
  bool running = false;
  bool stopped = false;
  std::string ingest_state = "none";
  std::function<void()> abort_handler;
  ServiceCounters counters;
  std::vector<std::weak_ptr<Session>> sessions;
  // Latest frame and status, replayed to clients that connect later.
  Payload last_frame, last_status;

  Impl(core::Octree& t, ServiceOptions o) : tree(t), opt(std::move(o)), view(opt.view) {}

  void accept();
  void broadcast(Payload frame, Payload status);
  void render_loop();
  std::string handle_text(const std::string& text);
};

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket s, FrameService::Impl& svc) : ws_(std::move(s)), svc_(svc) {}

  void run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->on_open();
    });
  }

  // Network thread only.
  void offer_frame(Payload frame, Payload status) {
    if (closed_) return;
    if (frame) {
      if (pending_frame_) {
        std::lock_guard lk(svc_.m);
        ++svc_.counters.frames_dropped;
      }
      pending_frame_ = std::move(frame);
    }
    if (status) pending_status_ = std::move(status);
    write_next();
  }

 private:
  void on_open() {
    Payload f, s;
    {
      std::lock_guard lk(svc_.m);
      ++svc_.counters.clients;
      f = svc_.last_frame;
      s = svc_.last_status;
    }
    open_ = true;
    offer_frame(f, s);
    read();
  }

  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      if (self->ws_.got_text()) {
        const std::string text = beast::buffers_to_string(self->buf_.data());
        self->control_.push_back(std::make_shared<const std::string>(self->svc_.handle_text(text)));
        self->write_next();
      }
      self->buf_.consume(self->buf_.size());
      self->read();
    });
  }

  void write_next() {
    if (writing_ || closed_ || !open_) return;
    Payload next;
    bool binary = false;
    if (!control_.empty()) {
      next = std::move(control_.front());
      control_.pop_front();
    } else if (pending_frame_) {
      next = std::move(pending_frame_);
      pending_frame_.reset();
      binary = true;
    } else if (pending_status_) {
      next = std::move(pending_status_);
      pending_status_.reset();
    } else {
      return;
    }
    writing_ = true;
    ws_.binary(binary);
    ws_.async_write(net::buffer(*next), [self = shared_from_this(), next, binary](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return self->close();
      if (binary) {
        std::lock_guard lk(self->svc_.m);
        ++self->svc_.counters.frames_sent;
      }
      self->write_next();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    if (open_) {
      std::lock_guard lk(svc_.m);
      --svc_.counters.clients;
    }
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  websocket::stream<beast::tcp_stream> ws_;
  FrameService::Impl& svc_;
  beast::flat_buffer buf_;
  std::deque<Payload> control_;
  Payload pending_frame_, pending_status_;
  bool writing_ = false;
  bool open_ = false;
  bool closed_ = false;
};

}  // namespace

void FrameService::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    if (opt.send_buffer_bytes > 0) {
      beast::error_code ignored;
      socket.set_option(net::socket_base::send_buffer_size(opt.send_buffer_bytes), ignored);
    }
    auto s = std::make_shared<Session>(std::move(socket), *this);
    {
      std::lock_guard lk(m);
      std::erase_if(sessions, [](const auto& w) { return w.expired(); });
      sessions.push_back(s);
    }
    s->run();
    accept();
  });
}

void FrameService::Impl::broadcast(Payload frame, Payload status) {
  std::vector<std::shared_ptr<Session>> live;
  {
    std::lock_guard lk(m);
    if (frame) last_frame = frame;
    if (status) last_status = status;
    for (const auto& w : sessions)
      if (auto s = w.lock()) live.push_back(std::move(s));
  }
  for (auto& s : live) net::post(io, [s, frame, status] { s->offer_frame(frame, status); });
}

std::string FrameService::Impl::handle_text(const std::string& text) {
  std::function<void()> on_abort;
  std::string reply;
  {
    std::lock_guard lk(m);
    ++counters.control_messages;
    const ControlResult r = apply_control(text, view, tree.descriptor());
    if (!r.ok) ++counters.nacks;
    if (r.view_changed) ++view_version;
    if (r.reset) ++reset_version;
    if (r.abort_ingest) on_abort = abort_handler;
    reply = control_reply(r, view);
  }
  if (on_abort) on_abort();
  cv.notify_all();
  return reply;
}

void FrameService::Impl::render_loop() {
  render::RenderSession session(tree, opt.device);
  enum class Phase { FullFrame, Refinement, Idle };
  Phase phase = Phase::FullFrame;
  std::uint64_t seen_view = ~0ull, seen_reset = 0, frame_id = 0;
  int passes = 0;
  bool complete = false;

  auto publish = [&](const render::Image* img, const char* phase_name) {
    ServiceStatus st;
    {
      std::lock_guard lk(m);
      st.ingest = ingest_state;
      st.frames_dropped = counters.frames_dropped;
      if (img) ++counters.frames_rendered;
    }
    st.phase = phase_name;
    st.progress = ingest::construction_progress(tree);
    st.bricks_resident = session.device().occupied_slots();
    st.refinement_complete = complete;
    st.refinement_passes = passes;
    Payload frame;
    if (img) {
      st.frame = ++frame_id;
      const std::vector<std::uint8_t> png = encode_png(*img);
      std::string msg(kFrameHeaderBytes + png.size(), '\0');
      encode_frame_header({static_cast<std::uint32_t>(frame_id), static_cast<std::uint32_t>(img->width),
                           static_cast<std::uint32_t>(img->height), kPixelFormatPngRgba},
                          reinterpret_cast<std::uint8_t*>(msg.data()));
      std::memcpy(msg.data() + kFrameHeaderBytes, png.data(), png.size());
      frame = std::make_shared<const std::string>(std::move(msg));
    } else {
      st.frame = frame_id;
    }
    broadcast(frame, std::make_shared<const std::string>(status_json(st)));
  };

  for (;;) {
    ViewState v;
    bool restart = false;
    {
      std::unique_lock lk(m);
      if (phase == Phase::Idle && seen_view == view_version && seen_reset == reset_version && running)
        cv.wait_for(lk, std::chrono::duration<double, std::milli>(opt.idle_poll_ms));
      if (!running) break;
      if (seen_view != view_version || seen_reset != reset_version) restart = true;
      seen_view = view_version;
      seen_reset = reset_version;
      v = view;
    }
    if (session.sync()) restart = true;
    if (restart) {
      session.invalidate();
      complete = false;
      passes = 0;
      phase = v.policy == StrategyPolicy::Refinement ? Phase::Refinement : Phase::FullFrame;
    }
    if (phase == Phase::Idle) continue;

    render::Scene s = v.scene;
    if (phase == Phase::FullFrame) {
      s.settings.strategy = device::Strategy::FullFrame;
      const render::FrameResult r = session.frame(s);
      publish(&r.image, "fullframe");
      if (v.policy == StrategyPolicy::Auto) {
        phase = Phase::Refinement;
      } else if (r.complete) {
        phase = Phase::Idle;
      }
    } else {
      s.settings.strategy = device::Strategy::Refinement;
      const render::FrameResult r = session.frame(s);
      passes = r.passes;
      if (r.complete) {
        complete = true;
        {
          std::lock_guard lk(m);
          ++counters.refinements_completed;
        }
        publish(&r.image, "idle");
        phase = Phase::Idle;
      } else if (passes % 8 == 1) {
        publish(nullptr, "refinement");
      }
    }
  }
}

FrameService::FrameService(core::Octree& tree, ServiceOptions opt) : impl_(std::make_unique<Impl>(tree, std::move(opt))) {
  impl_->view.scene.validate(tree.descriptor().channels);
}

FrameService::~FrameService() { stop(); }

unsigned short FrameService::start() {
  Impl& s = *impl_;
  try {
    const tcp::endpoint ep(net::ip::make_address(s.opt.address), s.opt.port);
    s.acceptor.open(ep.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(ep);
    s.acceptor.listen();
  } catch (const std::exception& e) {
    throw IoError(std::string("cannot listen on ") + s.opt.address + ":" + std::to_string(s.opt.port) + ": " +
                  e.what());
  }
  {
    std::lock_guard lk(s.m);
    s.running = true;
  }
  s.accept();
  s.io_thread = std::thread([&s] { s.io.run(); });
  s.render_thread = std::thread([&s] { s.render_loop(); });
  return s.acceptor.local_endpoint().port();
}

void FrameService::stop() {
  Impl& s = *impl_;
  {
    std::lock_guard lk(s.m);
    if (s.stopped) return;
    s.stopped = true;
    s.running = false;
  }
  s.cv.notify_all();
  if (s.render_thread.joinable()) s.render_thread.join();
  s.io.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
}

void FrameService::wait() {
  Impl& s = *impl_;
  std::unique_lock lk(s.m);
  s.cv.wait(lk, [&] { return s.stopped; });
}

void FrameService::set_abort_handler(std::function<void()> fn) {
  std::lock_guard lk(impl_->m);
  impl_->abort_handler = std::move(fn);
}

void FrameService::set_ingest_state(const std::string& state) {
  {
    std::lock_guard lk(impl_->m);
    impl_->ingest_state = state;
  }
  impl_->cv.notify_all();
}

ServiceCounters FrameService::counters() const {
  std::lock_guard lk(impl_->m);
  return impl_->counters;
}

ViewState FrameService::view() const {
  std::lock_guard lk(impl_->m);
  return impl_->view;
}

}  // namespace voxstream::app
