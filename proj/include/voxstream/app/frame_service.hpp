// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "voxstream/app/control.hpp"
#include "voxstream/core/octree.hpp"
#include "voxstream/device/device_state.hpp"

namespace voxstream::app {

// Binary frame message: 16-byte little-endian header, then the PNG (RGBA, straight alpha).
inline constexpr std::size_t kFrameHeaderBytes = 16;
inline constexpr std::uint32_t kPixelFormatPngRgba = 1;

struct FrameHeader {
  std::uint32_t frame_id = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t format = kPixelFormatPngRgba;
};
void encode_frame_header(const FrameHeader& h, std::uint8_t* out);
FrameHeader decode_frame_header(const std::uint8_t* in);

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 = any free port
  device::DeviceConfig device;
  ViewState view;                  // initial settings, already resolved for the volume
  double idle_poll_ms = 20.0;      // render loop wake-up when nothing changes
  int send_buffer_bytes = 0;       // per-connection socket send buffer; 0 = system default
};

struct ServiceCounters {
  std::uint64_t frames_rendered = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_dropped = 0;  // replaced before a slow client took them
  std::uint64_t control_messages = 0;
  std::uint64_t nacks = 0;
  std::uint64_t refinements_completed = 0;
  std::uint64_t clients = 0;  // connected now
};

// WebSocket service: one render loop broadcasting frames and status to every client; each
// connection's control messages edit the shared view. Text messages carry JSON, binary messages frames.
class FrameService {
 public:
  FrameService(core::Octree& tree, ServiceOptions opt);
  ~FrameService();
  FrameService(const FrameService&) = delete;
  FrameService& operator=(const FrameService&) = delete;

  // Binds and starts the network and render threads. Returns the bound port. Throws IoError.
  unsigned short start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  // Called on an inbound abort message.
  void set_abort_handler(std::function<void()> fn);
  // none, running, finished or aborted; reported in the status messages.
  void set_ingest_state(const std::string& state);

  ServiceCounters counters() const;
  ViewState view() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace voxstream::app
