#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orthotrack/core/errors.hpp"

namespace orthotrack {

/// Token groups along an attention axis. One-stream layouts use the four
/// modality/region groups, two-stream relation layers use Template/Search.
enum class Group {
    TemplateRgb,
    TemplateEvent,
    SearchRgb,
    SearchEvent,
    Template,
    Search,
};

inline const char* group_name(Group g) {
    switch (g) {
    case Group::TemplateRgb:
        return "T_I";
    case Group::TemplateEvent:
        return "T_E";
    case Group::SearchRgb:
        return "S_I";
    case Group::SearchEvent:
        return "S_E";
    case Group::Template:
        return "T";
    case Group::Search:
        return "S";
    }
    return "?";
}

/// Ordered partition of [0, N) into contiguous groups.
class BlockMap {
  public:
    BlockMap() = default;
    BlockMap(std::vector<Group> groups, std::vector<std::size_t> sizes) : groups_(std::move(groups)) {
        if (groups_.size() != sizes.size()) {
            throw InputError("BlockMap: one size per group required");
        }
        bounds_.push_back(0);
        for (std::size_t s : sizes) {
            bounds_.push_back(bounds_.back() + s);
        }
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            for (std::size_t j = i + 1; j < groups_.size(); ++j) {
                if (groups_[i] == groups_[j]) {
                    throw InputError(std::string("BlockMap: duplicate group ") + group_name(groups_[i]));
                }
            }
        }
    }

    const std::vector<Group>& groups() const { return groups_; }
    std::size_t total() const { return bounds_.empty() ? 0 : bounds_.back(); }

    bool contains(Group g) const { return index_of(g).has_value(); }

    /// Half-open [begin, end) range of a group; throws if absent.
    std::pair<std::size_t, std::size_t> range(Group g) const {
        auto i = index_of(g);
        if (!i) {
            throw InputError(std::string("BlockMap: no group ") + group_name(g));
        }
        return {bounds_[*i], bounds_[*i + 1]};
    }

    std::size_t size(Group g) const {
        auto [b, e] = range(g);
        return e - b;
    }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i + 1 < bounds_.size(); ++i) {
            out.push_back(bounds_[i + 1] - bounds_[i]);
        }
        return out;
    }

    friend bool operator==(const BlockMap&, const BlockMap&) = default;

  private:
    std::optional<std::size_t> index_of(Group g) const {
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            if (groups_[i] == g) {
                return i;
            }
        }
        return std::nullopt;
    }

    std::vector<Group> groups_;
    std::vector<std::size_t> bounds_;
};

} // namespace orthotrack
