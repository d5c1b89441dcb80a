#include "codewm/action.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <utility>

namespace codewm {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 15> kKindNames{{
    {ActionKind::click, "click"},
    {ActionKind::long_press, "long_press"},
    {ActionKind::swipe, "swipe"},
    {ActionKind::scroll_direction, "scroll_direction"},
    {ActionKind::type_text, "type_text"},
    {ActionKind::set_text, "set_text"},
    {ActionKind::system_back, "system_back"},
    {ActionKind::system_home, "system_home"},
    {ActionKind::system_recent, "system_recent"},
    {ActionKind::enter, "enter"},
    {ActionKind::open_app, "open_app"},
    {ActionKind::launch_app, "launch_app"},
    {ActionKind::wait, "wait"},
    {ActionKind::complete, "complete"},
    {ActionKind::impossible, "impossible"},
}};

void check_range(const GridPoint& p) {
  if (p.x < 0 || p.x > 1000 || p.y < 0 || p.y > 1000) {
    throw CoordinateOutOfRange("coordinate (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                               ") outside [0,1000]");
  }
}

int coord(const json& v, std::string_view what) {
  if (!v.is_number()) throw MissingField(std::string(what) + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw CoordinateOutOfRange(std::string(what) + " not finite");
  const long r = std::lround(d);
  if (r < 0 || r > 1000) {
    throw CoordinateOutOfRange(std::string(what) + "=" + std::to_string(r) + " outside [0,1000]");
  }
  return static_cast<int>(r);
}

const json& require(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) throw MissingField(std::string("missing field '") + key + "'");
  return *it;
}

GridPoint point_from_params(const json& params, std::string_view kind) {
  if (!params.is_array() || params.size() != 2) {
    throw MissingField(std::string(kind) + " expects params [x, y]");
  }
  return {coord(params[0], "x"), coord(params[1], "y")};
}

json point_params(const GridPoint& p) { return json::array({p.x, p.y}); }

}  // namespace

std::string_view to_string(ActionKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::up: return "up";
    case Direction::down: return "down";
    case Direction::left: return "left";
    case Direction::right: return "right";
  }
  return "up";
}

ActionKind action_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  throw UnknownActionType("unknown action kind '" + std::string(s) + "'");
}

Direction direction_from_string(std::string_view s) {
  const auto l = to_lower(trim(s));
  if (l == "up") return Direction::up;
  if (l == "down") return Direction::down;
  if (l == "left") return Direction::left;
  if (l == "right") return Direction::right;
  throw MissingField("invalid direction '" + std::string(s) + "'");
}

void CanonicalAction::validate() const {
  auto need_point = [&] {
    if (!point) throw MissingField(std::string(to_string(kind)) + " requires a point");
  };
  auto need_text = [&] {
    if (!text) throw MissingField(std::string(to_string(kind)) + " requires text");
  };
  switch (kind) {
    case ActionKind::click:
    case ActionKind::long_press:
      need_point();
      break;
    case ActionKind::set_text:
      need_point();
      need_text();
      break;
    case ActionKind::swipe:
      if (!point || !end_point) throw MissingField("swipe requires start and end points");
      break;
    case ActionKind::scroll_direction:
      if (!direction) throw MissingField("scroll_direction requires a direction");
      break;
    case ActionKind::type_text:
      need_text();
      break;
    case ActionKind::open_app:
    case ActionKind::launch_app:
      if (!app_name || app_name->empty()) {
        throw MissingField(std::string(to_string(kind)) + " requires an app identifier");
      }
      break;
    default:
      break;
  }
  if (point) check_range(*point);
  if (end_point) check_range(*end_point);
}

CanonicalAction CanonicalAction::click(int x, int y) {
  CanonicalAction a;
  a.kind = ActionKind::click;
  a.point = GridPoint{x, y};
  return a;
}

CanonicalAction CanonicalAction::long_press(int x, int y) {
  auto a = click(x, y);
  a.kind = ActionKind::long_press;
  return a;
}

CanonicalAction CanonicalAction::swipe(GridPoint from, GridPoint to, std::optional<double> velocity) {
  CanonicalAction a;
  a.kind = ActionKind::swipe;
  a.point = from;
  a.end_point = to;
  a.velocity = velocity;
  return a;
}

CanonicalAction CanonicalAction::scroll(Direction d) {
  CanonicalAction a;
  a.kind = ActionKind::scroll_direction;
  a.direction = d;
  return a;
}

CanonicalAction CanonicalAction::type(std::string text) {
  CanonicalAction a;
  a.kind = ActionKind::type_text;
  a.text = std::move(text);
  return a;
}

CanonicalAction CanonicalAction::simple(ActionKind k) {
  CanonicalAction a;
  a.kind = k;
  return a;
}

Direction gesture_direction(GridPoint from, GridPoint to) {
  const int dx = to.x - from.x;
  const int dy = to.y - from.y;
  if (std::abs(dy) >= std::abs(dx)) return dy < 0 ? Direction::up : Direction::down;
  return dx < 0 ? Direction::left : Direction::right;
}

bool expressible_in(const CanonicalAction& a, ActionSchema schema) {
  using K = ActionKind;
  if (schema == ActionSchema::m3a) {
    switch (a.kind) {
      case K::click: case K::long_press: case K::swipe: case K::scroll_direction:
      case K::type_text: case K::system_back: case K::system_home: case K::enter:
      case K::open_app:
        return true;
      default:
        return false;
    }
  }
  switch (a.kind) {
    case K::click: case K::long_press: case K::swipe: case K::set_text: case K::system_back:
    case K::system_home: case K::system_recent: case K::wait: case K::complete:
    case K::impossible: case K::launch_app:
      return true;
    default:
      return false;
  }
}

json serialize_action(const CanonicalAction& a, ActionSchema schema) {
  a.validate();
  if (!expressible_in(a, schema)) {
    throw SchemaMismatch(std::string(to_string(a.kind)) + " has no " +
                         (schema == ActionSchema::m3a ? "m3a" : "kapps") + " representation");
  }
  using K = ActionKind;
  if (schema == ActionSchema::m3a) {
    switch (a.kind) {
      case K::click: return {{"action_type", "TAP"}, {"x", a.point->x}, {"y", a.point->y}};
      case K::long_press:
        return {{"action_type", "LONG_PRESS"}, {"x", a.point->x}, {"y", a.point->y}};
      case K::swipe:
        return {{"action_type", "SCROLL"},
                {"direction", to_string(gesture_direction(*a.point, *a.end_point))}};
      case K::scroll_direction:
        return {{"action_type", "SCROLL"}, {"direction", to_string(*a.direction)}};
      case K::type_text: return {{"action_type", "TYPE"}, {"text", *a.text}};
      case K::system_back: return {{"action_type", "BACK"}};
      case K::system_home: return {{"action_type", "HOME"}};
      case K::enter: return {{"action_type", "ENTER"}};
      case K::open_app: return {{"action_type", "OPEN_APP"}, {"app_name", *a.app_name}};
      default: break;
    }
    throw SchemaMismatch("unreachable m3a kind");
  }
  json rec{{"action", ""}};
  switch (a.kind) {
    case K::click:
      rec = {{"action", "click"}, {"params", point_params(*a.point)}};
      break;
    case K::long_press:
      rec = {{"action", "long_press"}, {"params", point_params(*a.point)}};
      break;
    case K::swipe:
      rec = {{"action", "swipe"},
             {"params", json::array({a.point->x, a.point->y,
                                     a.velocity ? json(*a.velocity) : json(nullptr),
                                     a.end_point->x, a.end_point->y})}};
      break;
    case K::set_text:
      rec = {{"action", "set_text"}, {"params", point_params(*a.point)}, {"text", *a.text}};
      break;
    case K::system_back: rec = {{"action", "system_button"}, {"params", "back"}}; break;
    case K::system_home: rec = {{"action", "system_button"}, {"params", "home"}}; break;
    case K::system_recent: rec = {{"action", "system_button"}, {"params", "recent"}}; break;
    case K::wait:
      rec = {{"action", "wait"}};
      if (a.duration) rec["params"] = *a.duration;
      break;
    case K::complete:
    case K::impossible:
      rec = {{"action", to_string(a.kind)}};
      if (a.comment) rec["params"] = *a.comment;
      break;
    case K::launch_app: rec = {{"action", "launch_app"}, {"params", *a.app_name}}; break;
    default: throw SchemaMismatch("unreachable kapps kind");
  }
  return rec;
}

ActionSchema detect_schema(const json& record) {
  if (!record.is_object()) throw UnknownActionType("action record must be a JSON object");
  if (record.contains("action_type")) return ActionSchema::m3a;
  if (record.contains("action")) return ActionSchema::kapps;
  throw UnknownActionType("record has neither 'action_type' nor 'action'");
}

CanonicalAction parse_action(const json& record) { return parse_action(record, detect_schema(record)); }

CanonicalAction parse_action(const json& rec, ActionSchema schema) {
  if (!rec.is_object()) throw UnknownActionType("action record must be a JSON object");
  CanonicalAction a;
  if (schema == ActionSchema::m3a) {
    const auto& t = require(rec, "action_type");
    if (!t.is_string()) throw UnknownActionType("action_type must be a string");
    std::string type = t.get<std::string>();
    for (auto& c : type) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (type == "TAP" || type == "LONG_PRESS") {
      a.kind = type == "TAP" ? ActionKind::click : ActionKind::long_press;
      a.point = GridPoint{coord(require(rec, "x"), "x"), coord(require(rec, "y"), "y")};
    } else if (type == "SCROLL") {
      a.kind = ActionKind::scroll_direction;
      a.direction = direction_from_string(require(rec, "direction").get<std::string>());
    } else if (type == "TYPE") {
      a.kind = ActionKind::type_text;
      a.text = require(rec, "text").get<std::string>();
    } else if (type == "BACK") {
      a.kind = ActionKind::system_back;
    } else if (type == "HOME") {
      a.kind = ActionKind::system_home;
    } else if (type == "ENTER") {
      a.kind = ActionKind::enter;
    } else if (type == "OPEN_APP") {
      a.kind = ActionKind::open_app;
      a.app_name = require(rec, "app_name").get<std::string>();
    } else {
      throw UnknownActionType("unknown m3a action_type '" + t.get<std::string>() + "'");
    }
    a.validate();
    return a;
  }

  const auto& name_field = require(rec, "action");
  if (!name_field.is_string()) throw UnknownActionType("action must be a string");
  const std::string name = name_field.get<std::string>();
  const json params = rec.contains("params") ? rec.at("params") : json(nullptr);
  if (name == "click" || name == "long_press") {
    a.kind = name == "click" ? ActionKind::click : ActionKind::long_press;
    a.point = point_from_params(params, name);
  } else if (name == "swipe") {
    a.kind = ActionKind::swipe;
    if (!params.is_array() || params.size() != 5) {
      throw MissingField("swipe expects params [start_x, start_y, velocity, end_x, end_y]");
    }
    a.point = GridPoint{coord(params[0], "start_x"), coord(params[1], "start_y")};
    if (!params[2].is_null()) a.velocity = params[2].get<double>();
    a.end_point = GridPoint{coord(params[3], "end_x"), coord(params[4], "end_y")};
  } else if (name == "system_button") {
    if (!params.is_string()) throw MissingField("system_button expects recent|home|back");
    const auto which = params.get<std::string>();
    if (which == "back") a.kind = ActionKind::system_back;
    else if (which == "home") a.kind = ActionKind::system_home;
    else if (which == "recent") a.kind = ActionKind::system_recent;
    else throw UnknownActionType("unknown system_button '" + which + "'");
  } else if (name == "set_text") {
    a.kind = ActionKind::set_text;
    a.point = point_from_params(params, name);
    a.text = require(rec, "text").get<std::string>();
  } else if (name == "wait") {
    a.kind = ActionKind::wait;
    if (params.is_number()) a.duration = params.get<double>();
  } else if (name == "complete" || name == "impossible") {
    a.kind = name == "complete" ? ActionKind::complete : ActionKind::impossible;
    if (params.is_string()) a.comment = params.get<std::string>();
  } else if (name == "launch_app") {
    a.kind = ActionKind::launch_app;
    if (!params.is_string()) throw MissingField("launch_app expects a package_name");
    a.app_name = params.get<std::string>();
  } else {
    throw UnknownActionType("unknown kapps action '" + name + "'");
  }
  a.validate();
  return a;
}

std::string action_prompt_text(const CanonicalAction& a) {
  const auto schema = expressible_in(a, ActionSchema::m3a) && a.kind != ActionKind::swipe
                          ? ActionSchema::m3a
                          : ActionSchema::kapps;
  return serialize_action(a, schema).dump();
}

}  // namespace codewm
