/*
 * Copyright 2026 The freda Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "freda/protocol/transport.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace freda::protocol {

namespace {

void sort_inbox(std::vector<Message>& box) {
  std::stable_sort(box.begin(), box.end(), [](const Message& a, const Message& b) {
    if (a.sender.rank() != b.sender.rank()) return a.sender.rank() < b.sender.rank();
    return a.seq < b.seq;
  });
}

}  // namespace

MemoryTransport::MemoryTransport(const std::vector<PartyId>& parties) {
  for (const auto& p : parties) boxes_[p.rank()];
}

void MemoryTransport::send(const Message& m) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = boxes_.find(m.receiver.rank());
  require(it != boxes_.end(), ErrorCode::kProtocol,
          "MemoryTransport: unknown receiver " + m.receiver.str());
  it->second.push_back(m);
}

std::vector<Message> MemoryTransport::drain(const PartyId& party) {
  std::vector<Message> out;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = boxes_.find(party.rank());
    require(it != boxes_.end(), ErrorCode::kProtocol,
            "MemoryTransport: unknown party " + party.str());
    out.swap(it->second);
  }
  sort_inbox(out);
  return out;
}

SocketTransport::SocketTransport(const std::vector<PartyId>& parties) {
  for (const auto& p : parties) {
    auto ep = std::make_unique<Endpoint>();
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
      fail(ErrorCode::kIo, std::string("SocketTransport: socketpair failed: ") +
                               std::strerror(errno));
    }
    ep->write_fd = fds[0];
    ep->read_fd = fds[1];
    ep->reader = std::thread(&SocketTransport::read_loop, ep.get());
    endpoints_[p.rank()] = std::move(ep);
  }
}

SocketTransport::~SocketTransport() {
  for (auto& [rank, ep] : endpoints_) {
    ::shutdown(ep->write_fd, SHUT_WR);
    if (ep->reader.joinable()) ep->reader.join();
    ::close(ep->write_fd);
    ::close(ep->read_fd);
  }
}

SocketTransport::Endpoint& SocketTransport::endpoint(const PartyId& party) {
  auto it = endpoints_.find(party.rank());
  require(it != endpoints_.end(), ErrorCode::kProtocol,
          "SocketTransport: unknown party " + party.str());
  return *it->second;
}

void SocketTransport::send(const Message& m) {
  Endpoint& ep = endpoint(m.receiver);
  const auto frame = encode_frame(m);
  {
    std::lock_guard<std::mutex> lock(ep.write_mu);
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::write(ep.write_fd, frame.data() + off, frame.size() - off);
      if (n < 0 && errno == EINTR) continue;
      require(n > 0, ErrorCode::kIo,
              std::string("SocketTransport: write failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
    ++ep.sent;
  }
  std::lock_guard<std::mutex> lock(stats_mu_);
  bytes_sent_ += frame.size();
}

void SocketTransport::read_loop(Endpoint* ep) {
  std::vector<std::uint8_t> buffer;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const ssize_t n = ::read(ep->read_fd, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.insert(buffer.end(), chunk, chunk + n);
    try {
      Message m;
      while (decode_frame(buffer, m)) {
        std::lock_guard<std::mutex> lock(ep->box_mu);
        ep->box.push_back(std::move(m));
        ++ep->received;
        ep->box_cv.notify_all();
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(ep->box_mu);
      ep->error = e.what();
      ep->box_cv.notify_all();
      break;
    }
  }
  std::lock_guard<std::mutex> lock(ep->box_mu);
  ep->closed = true;
  ep->box_cv.notify_all();
}

std::vector<Message> SocketTransport::drain(const PartyId& party) {
  Endpoint& ep = endpoint(party);
  std::uint64_t expected = 0;
  {
    std::lock_guard<std::mutex> lock(ep.write_mu);
    expected = ep.sent;
  }
  std::vector<Message> out;
  {
    std::unique_lock<std::mutex> lock(ep.box_mu);
    ep.box_cv.wait(lock, [&] {
      return ep.received >= expected || !ep.error.empty() || ep.closed;
    });
    require(ep.error.empty(), ErrorCode::kProtocol,
            "SocketTransport: bad frame for " + party.str() + ": " + ep.error);
    require(ep.received >= expected, ErrorCode::kIo,
            "SocketTransport: stream closed before delivery to " + party.str());
    out.swap(ep.box);
  }
  sort_inbox(out);
  return out;
}

std::uint64_t SocketTransport::bytes_sent() const {
  std::lock_guard<std::mutex> lock(stats_mu_);
  return bytes_sent_;
}

std::unique_ptr<Transport> make_transport(const std::string& kind,
                                          const std::vector<PartyId>& parties) {
  if (kind == "memory") return std::make_unique<MemoryTransport>(parties);
  if (kind == "socket") return std::make_unique<SocketTransport>(parties);
  fail(ErrorCode::kConfig, "transport.kind: unknown transport '" + kind + "'");
}

}  // namespace freda::protocol
