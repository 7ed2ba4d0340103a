// Copyright (c) 2026 gpucc-sim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// A secure session: the master secret negotiated with the GSP responder, the
// derived key table, and the standing cipher-state pairs for the fixed
// channels (RPC, DMA, fault delivery). Lives for one boot epoch.

#include <memory>

#include "gpucc/boot.hpp"
#include "gpucc/cipher.hpp"

namespace gpucc {

// Sender- and receiver-side states of one simulated channel direction.
// Same key, same salt; the producer owns tx, the consumer owns rx.
struct StatePair {
  ChannelCipherState tx;
  ChannelCipherState rx;
};

class Session {
 public:
  static Session establish(Machine& m, ByteView requester_random, ByteView responder_random) {
    if (!booted(m)) throw ConfigError("session establishment requires a booted GSP");
    Session s;
    s.master_ = establish_session(requester_random, responder_random);
    s.keys_ = derive_all_keys(s.master_);
    s.epoch_ = m.epoch;

    s.rpc_cpu_gsp = s.make_pair(KeyId::from_name("cpu_gsp_locked_rpc"));
    s.rpc_gsp_cpu = s.make_pair(KeyId::from_name("gsp_cpu_locked_rpc"));
    s.dma_cpu_gsp = s.make_pair(KeyId::from_name("cpu_gsp_dma"));
    s.dma_gsp_cpu = s.make_pair(KeyId::from_name("gsp_cpu_dma"));
    s.fault_replayable = s.make_pair(KeyId::from_name("gsp_cpu_replayable_fault"));
    s.fault_non_replayable = s.make_pair(KeyId::from_name("gsp_cpu_non_replayable_fault"));

    m.trace.emit("spdm", "session_establish", {{"epoch", s.epoch_}, {"keys", kKeyCount}});
    return s;
  }

  const KeyTable& keys() const { return keys_; }
  const MasterSecret& master() const { return master_; }
  uint64_t epoch() const { return epoch_; }
  IvLog& iv_log() { return *iv_log_; }

  Status check_fresh(const Machine& m) const {
    return epoch_ == m.epoch ? ok_status() : Status(Err::session_stale);
  }

  ChannelCipherState make_state(KeyId id) {
    ChannelCipherState st;
    st.key_id = id;
    st.salt = next_salt();
    st.epoch = epoch_;
    st.iv_log = iv_log_.get();
    return st;
  }

  StatePair make_pair(KeyId id) {
    ChannelCipherState tx = make_state(id);
    ChannelCipherState rx = tx;  // shares salt; counters track independently
    rx.iv_log = nullptr;         // only seals are logged
    return {tx, rx};
  }

  // Standing channel states.
  StatePair rpc_cpu_gsp, rpc_gsp_cpu;
  StatePair dma_cpu_gsp, dma_gsp_cpu;
  StatePair fault_replayable, fault_non_replayable;

 private:
  uint32_t next_salt() { return uint32_t(epoch_ << 20) ^ salt_counter_++; }

  MasterSecret master_;
  KeyTable keys_;
  uint64_t epoch_ = 0;
  uint32_t salt_counter_ = 1;
  // Heap-backed so cipher states keep a stable pointer across session moves.
  std::unique_ptr<IvLog> iv_log_ = std::make_unique<IvLog>();
};

}  // namespace gpucc
