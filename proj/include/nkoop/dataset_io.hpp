#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nkoop/core.hpp"

namespace nkoop {

/// Malformed JSONL input; carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline nlohmann::json state_json(const RobotState& s, int dim) {
    auto j = nlohmann::json::array({s.x, s.y});
    if (dim == 3) j.push_back(s.theta);
    return j;
}

inline RobotState state_from_json(const nlohmann::json& j, int dim) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim) {
        throw std::invalid_argument("state must be an array of " + std::to_string(dim) + " numbers");
    }
    return {j.at(0).get<double>(), j.at(1).get<double>(), dim == 3 ? j.at(2).get<double>() : 0.0};
}

}  // namespace detail

/// Header line {"meta": {...}} then one {"trial","x","u","x_next"} object per line.
inline void write_dataset(std::ostream& os, const Dataset& data) {
    const int dim = data.meta.state_dim;
    nlohmann::json meta = {{"meta",
                            {{"sample_rate_hz", data.meta.sample_rate_hz},
                             {"n_trials", data.meta.n_trials},
                             {"seed", data.meta.seed},
                             {"state_dim", dim}}}};
    os << meta.dump() << '\n';
    for (const Sample& s : data.samples) {
        nlohmann::json line = {{"trial", s.trial_id},
                               {"x", detail::state_json(s.state, dim)},
                               {"u", {s.input.u1, s.input.u2, s.input.stage}},
                               {"x_next", detail::state_json(s.next_state, dim)}};
        os << line.dump() << '\n';
    }
}

inline Dataset read_dataset(std::istream& is) {
    Dataset data;
    std::string text;
    std::size_t line_no = 0;
    bool have_meta = false;
    int dim = 0;
    while (std::getline(is, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        try {
            if (!have_meta) {
                if (!j.contains("meta")) throw ParseError(line_no, "first line must be a {\"meta\": ...} header");
                const auto& m = j.at("meta");
                data.meta.sample_rate_hz = m.value("sample_rate_hz", 2.0);
                data.meta.seed = m.value("seed", std::uint64_t{0});
                dim = m.value("state_dim", 0);
                have_meta = true;
                continue;
            }
            if (dim == 0) dim = static_cast<int>(j.at("x").size());
            if (dim != 2 && dim != 3) throw ParseError(line_no, "state must have 2 or 3 entries");
            Sample s;
            s.trial_id = j.at("trial").get<int>();
            s.state = detail::state_from_json(j.at("x"), dim);
            s.next_state = detail::state_from_json(j.at("x_next"), dim);
            const auto& u = j.at("u");
            if (!u.is_array() || u.size() < 2 || u.size() > 3) throw ParseError(line_no, "u must be [u1, u2, stage?]");
            s.input = {u.at(0).get<double>(), u.at(1).get<double>(), u.size() == 3 ? u.at(2).get<double>() : 0.0};
            data.samples.push_back(s);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (!have_meta) throw ParseError(line_no, "missing meta header");
    data.meta.state_dim = dim == 0 ? 3 : dim;
    data.validate();
    data.meta.n_trials = static_cast<int>(data.trial_ranges().size());
    return data;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_dataset(os, data);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_dataset(is);
}

}  // namespace nkoop
