// SPDX-License-Identifier: Apache-2.0
//
// csifb: compressed CSI feedback simulation for correlated massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CSIFB_CONFIG_HPP
#define CSIFB_CONFIG_HPP

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace csifb
{

// Raised on any malformed or out-of-schema config input. The message always
// carries "<file>:<line>" plus the offending key where applicable.
struct ConfigError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// Flat "key = value" document. '#' starts a comment; keys may repeat (used
// for scheme lists). Values keep their raw text; typed access happens at
// schema-resolution time so errors can name the file, line and key.
class FlatConfig
{
  public:
    struct Entry
    {
        std::string value;
        int line = 0;
    };

    static FlatConfig parse_file(const std::string &path)
    {
        std::ifstream is(path);
        if (!is)
            throw ConfigError(path + ": cannot open config file");
        FlatConfig cfg;
        cfg.path_ = path;
        std::string line;
        int line_no = 0;
        while (std::getline(is, line))
        {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty())
                continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(where(path, line_no) + ": expected 'key = value'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError(where(path, line_no) + ": empty key");
            cfg.entries_[key].push_back({value, line_no});
        }
        return cfg;
    }

    static FlatConfig parse_string(const std::string &text, const std::string &name = "<inline>")
    {
        const std::string tmp_path = name;
        FlatConfig cfg;
        cfg.path_ = tmp_path;
        std::istringstream is(text);
        std::string line;
        int line_no = 0;
        while (std::getline(is, line))
        {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty())
                continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(where(tmp_path, line_no) + ": expected 'key = value'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError(where(tmp_path, line_no) + ": empty key");
            cfg.entries_[key].push_back({value, line_no});
        }
        return cfg;
    }

    const std::string &path() const { return path_; }

    bool has(const std::string &key) const { return entries_.count(key) > 0; }

    // All occurrences of a repeatable key, in file order.
    std::vector<Entry> all(const std::string &key) const
    {
        mark_consumed(key);
        auto it = entries_.find(key);
        return it == entries_.end() ? std::vector<Entry>{} : it->second;
    }

    std::string get_string(const std::string &key) const
    {
        return single(key).value;
    }

    std::string get_string(const std::string &key, const std::string &fallback) const
    {
        mark_consumed(key);
        return has(key) ? single(key).value : fallback;
    }

    double get_double(const std::string &key) const
    {
        const Entry &e = single(key);
        return to_double(e.value, key, e.line);
    }

    double get_double(const std::string &key, double fallback) const
    {
        mark_consumed(key);
        return has(key) ? get_double(key) : fallback;
    }

    std::uint64_t get_u64(const std::string &key) const
    {
        const Entry &e = single(key);
        return to_u64(e.value, key, e.line);
    }

    std::uint64_t get_u64(const std::string &key, std::uint64_t fallback) const
    {
        mark_consumed(key);
        return has(key) ? get_u64(key) : fallback;
    }

    bool get_bool(const std::string &key, bool fallback) const
    {
        mark_consumed(key);
        if (!has(key))
            return fallback;
        const Entry &e = single(key);
        if (e.value == "true" || e.value == "1" || e.value == "yes")
            return true;
        if (e.value == "false" || e.value == "0" || e.value == "no")
            return false;
        throw ConfigError(where(path_, e.line) + ": key '" + key + "': expected a boolean");
    }

    std::vector<double> get_double_list(const std::string &key) const
    {
        const Entry &e = single(key);
        std::vector<double> out;
        for (const std::string &tok : split_list(e.value))
            out.push_back(to_double(tok, key, e.line));
        if (out.empty())
            throw ConfigError(where(path_, e.line) + ": key '" + key + "': empty list");
        return out;
    }

    std::vector<std::uint64_t> get_u64_list(const std::string &key) const
    {
        const Entry &e = single(key);
        std::vector<std::uint64_t> out;
        for (const std::string &tok : split_list(e.value))
            out.push_back(to_u64(tok, key, e.line));
        if (out.empty())
            throw ConfigError(where(path_, e.line) + ": key '" + key + "': empty list");
        return out;
    }

    // Every key must have been consumed by the schema; anything left is a typo.
    void reject_unknown_keys() const
    {
        for (const auto &[key, entries] : entries_)
            if (!consumed_.count(key))
                throw ConfigError(where(path_, entries.front().line) + ": unknown key '" + key + "'");
    }

    ConfigError error_at(const std::string &key, const std::string &message) const
    {
        auto it = entries_.find(key);
        const int line = it != entries_.end() ? it->second.front().line : 0;
        return ConfigError(where(path_, line) + ": key '" + key + "': " + message);
    }

    static std::string trim(const std::string &s)
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::vector<std::string> split_list(const std::string &s)
    {
        std::vector<std::string> out;
        std::string tok;
        std::istringstream is(s);
        while (std::getline(is, tok, ','))
        {
            const std::string t = trim(tok);
            if (!t.empty())
                out.push_back(t);
        }
        return out;
    }

  private:
    static std::string where(const std::string &path, int line)
    {
        return path + ":" + std::to_string(line);
    }

    const Entry &single(const std::string &key) const
    {
        mark_consumed(key);
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw ConfigError(path_ + ": missing required key '" + key + "'");
        if (it->second.size() > 1)
            throw ConfigError(where(path_, it->second[1].line) + ": key '" + key +
                              "' given more than once");
        return it->second.front();
    }

    double to_double(const std::string &s, const std::string &key, int line) const
    {
        try
        {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size())
                throw std::invalid_argument("");
            return v;
        }
        catch (const std::exception &)
        {
            throw ConfigError(where(path_, line) + ": key '" + key + "': '" + s +
                              "' is not a number");
        }
    }

    std::uint64_t to_u64(const std::string &s, const std::string &key, int line) const
    {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError(where(path_, line) + ": key '" + key + "': '" + s +
                              "' is not a non-negative integer");
        return v;
    }

    void mark_consumed(const std::string &key) const { consumed_.insert(key); }

    std::string path_;
    std::map<std::string, std::vector<Entry>> entries_;
    mutable std::set<std::string> consumed_;
};

} // namespace csifb

#endif
