#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace codewm::prompts {

// Fixed protocol texts. Placeholders are written as {name} and filled by fill().
extern const std::string_view kImgToCode;
extern const std::string_view kLookAhead;
extern const std::string_view kWorldModel;
extern const std::string_view kJudge;
extern const std::string_view kAlternatives;
extern const std::string_view kSelect;
extern const std::string_view kValueNoWm;
extern const std::string_view kValueWm;

/// Replaces each "{key}" with its value. Unknown braces are left intact, so
/// literal JSON braces in the templates survive.
std::string fill(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

std::string look_ahead(const std::string& action);
std::string world_model(const std::string& action);
std::string judge(const std::string& action);
std::string alternatives(const std::string& goal, const std::string& history, const std::string& gt_action,
                         int num_alternatives);
std::string select(const std::string& goal, const std::string& history, const std::string& candidates);
std::string value_no_wm(const std::string& goal, const std::string& history, const std::string& action,
                        const std::string& reason);
std::string value_wm(const std::string& goal, const std::string& history, const std::string& action,
                     const std::string& reason);

}  // namespace codewm::prompts
