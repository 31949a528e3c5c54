#include "faithcheck/prompts.hpp"

#include "faithcheck/assets.hpp"
#include "faithcheck/error.hpp"

namespace faithcheck::prompts {

namespace {

struct Asset {
  std::string version;
  std::string body;
};

Asset split(const std::string& name) {
  const std::string path = "prompts/" + name + ".txt";
  const std::string raw(assets::get(path));
  const auto nl = raw.find('\n');
  const std::string first = raw.substr(0, nl);
  if (first.rfind("version: ", 0) != 0) fail(ErrorKind::Config, path + " lacks a version line");
  return {first.substr(9), nl == std::string::npos ? "" : raw.substr(nl + 1)};
}

}  // namespace

std::string version_of(const std::string& name) { return split(name).version; }

Rendered render(const std::string& name, const std::map<std::string, std::string>& vars) {
  const Asset a = split(name);
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = a.body.find("${", pos);
    if (open == std::string::npos) break;
    const auto close = a.body.find('}', open);
    if (close == std::string::npos) break;
    out.append(a.body, pos, open - pos);
    const std::string key = a.body.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) fail(ErrorKind::Config, "prompt " + name + " needs ${" + key + "}");
    out += it->second;
    pos = close + 1;
  }
  out.append(a.body, pos);
  return {"prompts/" + name + ".txt@" + a.version, out};
}

}  // namespace faithcheck::prompts
