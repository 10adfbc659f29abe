#include "patchlab/model/interface.hpp"

#include <charconv>
#include <sstream>

#include "patchlab/error.hpp"

namespace patchlab {

std::string_view to_string(Site site) {
  switch (site) {
    case Site::kResidBlock: return "RESID_BLOCK";
    case Site::kResidAttn: return "RESID_ATTN";
    case Site::kResidMlp: return "RESID_MLP";
    case Site::kQ: return "Q";
    case Site::kK: return "K";
    case Site::kV: return "V";
  }
  return "?";
}

std::string_view to_string(Channels channels) {
  switch (channels) {
    case Channels::kResid: return "RESID";
    case Channels::kKOnly: return "K_ONLY";
    case Channels::kVOnly: return "V_ONLY";
    case Channels::kKV: return "KV";
    case Channels::kQOnly: return "Q_ONLY";
    case Channels::kQKV: return "QKV";
  }
  return "?";
}

Site parse_site(std::string_view text) {
  for (Site s : {Site::kResidBlock, Site::kResidAttn, Site::kResidMlp, Site::kQ, Site::kK, Site::kV}) {
    if (to_string(s) == text) return s;
  }
  fail(ErrorCode::kInvalidArgument, "unknown site '" + std::string(text) + "'");
}

Channels parse_channels(std::string_view text) {
  for (Channels c : {Channels::kResid, Channels::kKOnly, Channels::kVOnly, Channels::kKV, Channels::kQOnly,
                     Channels::kQKV}) {
    if (to_string(c) == text) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown channel set '" + std::string(text) + "'");
}

bool is_resid_site(Site site) {
  return site == Site::kResidBlock || site == Site::kResidAttn || site == Site::kResidMlp;
}

bool is_attention_site(Site site) { return !is_resid_site(site); }

std::vector<Site> channel_sites(Channels channels) {
  switch (channels) {
    case Channels::kResid: return {};
    case Channels::kKOnly: return {Site::kK};
    case Channels::kVOnly: return {Site::kV};
    case Channels::kKV: return {Site::kK, Site::kV};
    case Channels::kQOnly: return {Site::kQ};
    case Channels::kQKV: return {Site::kQ, Site::kK, Site::kV};
  }
  return {};
}

namespace {

int parse_int(std::string_view text, std::string_view context) {
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  require(ec == std::errc() && ptr == end && !text.empty(), ErrorCode::kAddress,
          "malformed slot expression '" + std::string(context) + "'");
  return value;
}

}  // namespace

int resolve_slot(std::string_view slot, const SlotMap& slots) {
  if (slot.starts_with("pos:")) return parse_int(slot.substr(4), slot);
  const auto split = slot.find_last_of("+-");
  if (split != std::string_view::npos && split > 0) {
    const int base = resolve_slot(slot.substr(0, split), slots);
    const int offset = parse_int(slot.substr(split + 1), slot);
    return slot[split] == '+' ? base + offset : base - offset;
  }
  const auto it = slots.find(std::string(slot));
  require(it != slots.end(), ErrorCode::kAddress, "slot '" + std::string(slot) + "' is not in the slot map");
  return it->second;
}

std::string describe(const InterfaceKey& key) {
  std::ostringstream os;
  os << 'L' << key.layer << ' ' << to_string(key.site) << '@';
  for (std::size_t i = 0; i < key.slots.size(); ++i) os << (i ? "+" : "") << key.slots[i];
  if (key.heads) {
    os << " heads{";
    for (std::size_t i = 0; i < key.heads->size(); ++i) os << (i ? "," : "") << (*key.heads)[i];
    os << '}';
  }
  return os.str();
}

int site_width(Site site, const ModelConfig& cfg) { return is_resid_site(site) ? cfg.d_model : cfg.d_head; }

std::vector<Address> resolve(const InterfaceKey& key, Channels channels, const SlotMap& slots,
                             const ModelConfig& cfg) {
  require(key.layer >= 0 && key.layer < cfg.n_layers, ErrorCode::kAddress,
          "layer " + std::to_string(key.layer) + " out of range");
  require(!key.slots.empty(), ErrorCode::kAddress, "interface key names no slots");

  std::vector<int> positions;
  positions.reserve(key.slots.size());
  for (const auto& s : key.slots) {
    const int p = resolve_slot(s, slots);
    require(p >= 0 && p < cfg.max_positions, ErrorCode::kAddress,
            "slot '" + s + "' resolves to out-of-range position " + std::to_string(p));
    positions.push_back(p);
  }

  std::vector<Address> out;
  if (is_resid_site(key.site)) {
    require(channels == Channels::kResid, ErrorCode::kInvalidArgument,
            "residual interfaces only take the RESID channel set");
    for (int p : positions) out.push_back({key.layer, key.site, -1, p});
    return out;
  }

  require(channels != Channels::kResid, ErrorCode::kInvalidArgument,
          "attention interfaces need a Q/K/V channel set");
  std::vector<int> heads;
  if (key.heads) {
    heads = *key.heads;
    require(!heads.empty(), ErrorCode::kAddress, "explicit head set is empty");
    for (int h : heads) {
      require(h >= 0 && h < cfg.n_heads, ErrorCode::kAddress, "head " + std::to_string(h) + " out of range");
    }
  } else {
    for (int h = 0; h < cfg.n_heads; ++h) heads.push_back(h);
  }
  for (Site s : channel_sites(channels)) {
    for (int p : positions) {
      for (int h : heads) out.push_back({key.layer, s, h, p});
    }
  }
  return out;
}

}  // namespace patchlab
