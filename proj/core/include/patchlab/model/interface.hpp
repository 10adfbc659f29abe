#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/model/config.hpp"
#include "patchlab/numerics/tensor.hpp"

namespace patchlab {

// Hook points inside block `layer`:
//   kResidBlock  residual stream entering the block (d_model)
//   kResidAttn   attention sublayer output before it is added (d_model)
//   kResidMlp    MLP sublayer output before it is added (d_model)
//   kQ, kK, kV   per-head query / key / value vectors (d_head)
enum class Site { kResidBlock, kResidAttn, kResidMlp, kQ, kK, kV };

enum class Channels { kResid, kKOnly, kVOnly, kKV, kQOnly, kQKV };

enum class WriteMode { kReplace, kAdd };

std::string_view to_string(Site site);
std::string_view to_string(Channels channels);
Site parse_site(std::string_view text);
Channels parse_channels(std::string_view text);

bool is_resid_site(Site site);
bool is_attention_site(Site site);
// Attention sites written by a channel set, in resolution order.
std::vector<Site> channel_sites(Channels channels);

using SlotMap = std::map<std::string, int>;

// Slot names resolve against a SlotMap. Two extra forms are accepted:
// "name+k" / "name-k" (offset from a named slot) and "pos:N" (absolute).
int resolve_slot(std::string_view slot, const SlotMap& slots);

struct InterfaceKey {
  int layer = 0;
  Site site = Site::kResidBlock;
  std::optional<std::vector<int>> heads;  // nullopt selects every head
  std::vector<std::string> slots;

  friend bool operator==(const InterfaceKey&, const InterfaceKey&) = default;
};

std::string describe(const InterfaceKey& key);

// Fully resolved state address; head is -1 for residual sites.
struct Address {
  int layer = 0;
  Site site = Site::kResidBlock;
  int head = -1;
  int position = 0;

  friend auto operator<=>(const Address&, const Address&) = default;
};

// Addresses touched by (key, channels), ordered channel site, then slot,
// then head. Residual keys need Channels::kResid; attention keys need one of
// the Q/K/V channel sets.
std::vector<Address> resolve(const InterfaceKey& key, Channels channels, const SlotMap& slots,
                             const ModelConfig& cfg);

int site_width(Site site, const ModelConfig& cfg);

struct InterventionSpec {
  InterfaceKey key;
  Channels channels = Channels::kResid;
  // One vector per resolved address, in resolve() order.
  std::vector<Tensor> source;
  WriteMode mode = WriteMode::kReplace;
};

// What to record during a forward pass.
struct Probe {
  InterfaceKey key;
  Channels channels = Channels::kResid;
};

}  // namespace patchlab
