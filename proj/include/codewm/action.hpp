#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "codewm/util.hpp"

namespace codewm {

class UnknownActionType : public Error {
 public:
  using Error::Error;
};
class MissingField : public Error {
 public:
  using Error::Error;
};
class CoordinateOutOfRange : public Error {
 public:
  using Error::Error;
};
/// The action has no lossless representation in the requested schema.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

/// Point on the normalized [0,1000] screen grid.
struct GridPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

enum class ActionKind {
  click,
  long_press,
  swipe,
  scroll_direction,
  type_text,
  set_text,
  system_back,
  system_home,
  system_recent,
  enter,
  open_app,
  launch_app,
  wait,
  complete,
  impossible,
};

enum class Direction { up, down, left, right };

enum class ActionSchema { kapps, m3a };

std::string_view to_string(ActionKind k);
std::string_view to_string(Direction d);
ActionKind action_kind_from_string(std::string_view s);
Direction direction_from_string(std::string_view s);

struct CanonicalAction {
  ActionKind kind = ActionKind::wait;
  std::optional<GridPoint> point;
  std::optional<GridPoint> end_point;
  std::optional<double> velocity;
  std::optional<Direction> direction;
  std::optional<std::string> text;
  std::optional<std::string> app_name;
  std::optional<double> duration;
  std::optional<std::string> comment;

  /// Throws MissingField / CoordinateOutOfRange when the kind's requirements fail.
  void validate() const;

  bool has_point() const { return point.has_value(); }

  friend bool operator==(const CanonicalAction&, const CanonicalAction&) = default;

  static CanonicalAction click(int x, int y);
  static CanonicalAction long_press(int x, int y);
  static CanonicalAction swipe(GridPoint from, GridPoint to, std::optional<double> velocity = {});
  static CanonicalAction scroll(Direction d);
  static CanonicalAction type(std::string text);
  static CanonicalAction simple(ActionKind k);
};

/// Dominant-axis direction of a gesture from `from` to `to` (finger motion).
Direction gesture_direction(GridPoint from, GridPoint to);

bool expressible_in(const CanonicalAction& a, ActionSchema schema);

/// Serializes to one action record. Throws SchemaMismatch for actions with no
/// representation in `schema`; a swipe maps to an m3a SCROLL by dominant axis
/// (lossy, the one permitted conversion).
nlohmann::json serialize_action(const CanonicalAction& a, ActionSchema schema);

CanonicalAction parse_action(const nlohmann::json& record, ActionSchema schema);
/// Detects the schema from the record's keys ("action_type" vs "action").
CanonicalAction parse_action(const nlohmann::json& record);
ActionSchema detect_schema(const nlohmann::json& record);

/// Compact single-line text used in prompts: m3a JSON when expressible, else kapps.
std::string action_prompt_text(const CanonicalAction& a);

}  // namespace codewm
