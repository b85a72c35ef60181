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

#pragma once

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "freda/protocol/message.hpp"

namespace freda::protocol {

// Point-to-point delivery between registered parties. send() may be called
// from several threads; drain() returns everything delivered to a party so
// far, ordered by (sender rank, seq).
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Message& m) = 0;
  virtual std::vector<Message> drain(const PartyId& party) = 0;
  virtual std::string name() const = 0;
};

class MemoryTransport final : public Transport {
 public:
  explicit MemoryTransport(const std::vector<PartyId>& parties);
  void send(const Message& m) override;
  std::vector<Message> drain(const PartyId& party) override;
  std::string name() const override { return "memory"; }

 private:
  std::mutex mu_;
  std::map<std::uint64_t, std::vector<Message>> boxes_;
};

// Each party owns a connected AF_UNIX stream pair: senders write
// length-prefixed frames into it and a reader thread decodes them into the
// party's mailbox.
class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(const std::vector<PartyId>& parties);
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  void send(const Message& m) override;
  std::vector<Message> drain(const PartyId& party) override;
  std::string name() const override { return "socket"; }

  std::uint64_t bytes_sent() const;

 private:
  struct Endpoint {
    int write_fd = -1;
    int read_fd = -1;
    std::mutex write_mu;
    std::mutex box_mu;
    std::condition_variable box_cv;
    std::vector<Message> box;
    std::uint64_t sent = 0;      // guarded by write_mu
    std::uint64_t received = 0;  // guarded by box_mu
    std::string error;           // guarded by box_mu
    bool closed = false;         // guarded by box_mu
    std::thread reader;
  };

  Endpoint& endpoint(const PartyId& party);
  static void read_loop(Endpoint* ep);

  std::map<std::uint64_t, std::unique_ptr<Endpoint>> endpoints_;
  mutable std::mutex stats_mu_;
  std::uint64_t bytes_sent_ = 0;
};

std::unique_ptr<Transport> make_transport(const std::string& kind,
                                          const std::vector<PartyId>& parties);

}  // namespace freda::protocol
