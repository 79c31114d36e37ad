#pragma once

// Log of the discrete routing decisions taken during a forward pass: CMLS
// channel matchings and CMMT channel selections. Recording lets a caller
// dump them; replaying pins them so the rest of the network is a smooth
// function of its inputs (finite-difference checks need that).

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "xssm/cmls.hpp"

namespace xssm {

class Routing {
 public:
  enum class Mode { kRecord, kReplay };

  struct MatchingEntry {
    std::string label;
    std::size_t item;
    cmls::ChannelMatching matching;
  };
  struct SelectionEntry {
    std::string label;
    std::size_t item;
    std::vector<std::size_t> order;     // full top-1 sorted list S
    std::vector<double> scores;         // similarity of each entry of S
    std::vector<std::size_t> primary;   // primary channel behind each entry
    std::size_t selected;               // first `selected` entries are gathered
  };

  Mode mode() const { return mode_; }
  // Switches to replay and rewinds; subsequent calls return the log in order.
  void freeze() {
    mode_ = Mode::kReplay;
    next_matching_ = next_selection_ = 0;
  }
  void clear() {
    mode_ = Mode::kRecord;
    matchings_.clear();
    selections_.clear();
    next_matching_ = next_selection_ = 0;
  }

  // Prefix prepended to labels of entries recorded from now on.
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }

  template <typename Compute>
  cmls::ChannelMatching matching(const std::string& label, std::size_t item, Compute&& compute) {
    if (mode_ == Mode::kReplay) return replay(matchings_, next_matching_, label).matching;
    matchings_.push_back({scope_ + label, item, compute()});
    return matchings_.back().matching;
  }

  template <typename Compute>
  SelectionEntry selection(const std::string& label, std::size_t item, Compute&& compute) {
    if (mode_ == Mode::kReplay) return replay(selections_, next_selection_, label);
    SelectionEntry e = compute();
    e.label = scope_ + label;
    e.item = item;
    selections_.push_back(e);
    return e;
  }

  const std::vector<MatchingEntry>& matchings() const { return matchings_; }
  const std::vector<SelectionEntry>& selections() const { return selections_; }

 private:
  template <typename Entry>
  const Entry& replay(const std::vector<Entry>& log, std::size_t& cursor,
                      const std::string& label) {
    if (cursor >= log.size() || log[cursor].label != scope_ + label) {
      throw std::logic_error("routing: replay out of step at '" + scope_ + label + "'");
    }
    return log[cursor++];
  }

  Mode mode_ = Mode::kRecord;
  std::string scope_;
  std::vector<MatchingEntry> matchings_;
  std::vector<SelectionEntry> selections_;
  std::size_t next_matching_ = 0;
  std::size_t next_selection_ = 0;
};

}  // namespace xssm
