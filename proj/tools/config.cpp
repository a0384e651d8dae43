#include "config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace ldet::cli {

using nlohmann::json;

// --- TOML subset --------------------------------------------------------------------

namespace {

class TomlParser {
public:
    explicit TomlParser(const std::string& text) : s_(text) {}

    json parse()
    {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_ws_comments_newlines();
            if (eof())
                break;
            if (peek() == '[') {
                ++i_;
                if (peek() == '[')
                    fail("arrays of tables are not supported");
                std::vector<std::string> path = dotted_key();
                skip_inline_ws();
                expect(']');
                table = &root;
                for (const auto& k : path) {
                    json& next = (*table)[k];
                    if (next.is_null())
                        next = json::object();
                    else if (!next.is_object())
                        fail("table '" + k + "' redefines a value");
                    table = &next;
                }
                if (!defined_tables_.insert(join(path)).second)
                    fail("table [" + join(path) + "] defined twice");
            } else {
                key_value(*table);
            }
            end_of_line();
        }
        return root;
    }

private:
    const std::string& s_;
    std::size_t i_ = 0;
    int line_ = 1;
    std::set<std::string> defined_tables_;

    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }
    [[noreturn]] void fail(const std::string& msg) const
    {
        throw ConfigError("toml line " + std::to_string(line_) + ": " + msg);
    }
    void expect(char c)
    {
        if (peek() != c)
            fail(std::string("expected '") + c + "'");
        ++i_;
    }
    static std::string join(const std::vector<std::string>& p)
    {
        std::string out;
        for (const auto& k : p)
            out += (out.empty() ? "" : ".") + k;
        return out;
    }
    void skip_inline_ws()
    {
        while (!eof() && (peek() == ' ' || peek() == '\t'))
            ++i_;
    }
    void skip_comment()
    {
        if (peek() == '#')
            while (!eof() && peek() != '\n')
                ++i_;
    }
    void skip_ws_comments_newlines()
    {
        while (!eof()) {
            skip_inline_ws();
            skip_comment();
            if (peek() == '\r')
                ++i_;
            if (peek() == '\n') {
                ++i_;
                ++line_;
            } else {
                break;
            }
        }
    }
    void end_of_line()
    {
        skip_inline_ws();
        skip_comment();
        if (peek() == '\r')
            ++i_;
        if (!eof() && peek() != '\n')
            fail("unexpected text after value");
    }

    std::string bare_or_quoted_key()
    {
        skip_inline_ws();
        if (peek() == '"')
            return basic_string();
        if (peek() == '\'')
            return literal_string();
        const std::size_t start = i_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
            ++i_;
        if (i_ == start)
            fail("expected a key");
        return s_.substr(start, i_ - start);
    }
    std::vector<std::string> dotted_key()
    {
        std::vector<std::string> path{bare_or_quoted_key()};
        skip_inline_ws();
        while (peek() == '.') {
            ++i_;
            path.push_back(bare_or_quoted_key());
            skip_inline_ws();
        }
        return path;
    }

    void key_value(json& table)
    {
        const std::vector<std::string> path = dotted_key();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        json* t = &table;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            json& next = (*t)[path[k]];
            if (next.is_null())
                next = json::object();
            else if (!next.is_object())
                fail("key '" + path[k] + "' is not a table");
            t = &next;
        }
        if (t->contains(path.back()))
            fail("duplicate key '" + join(path) + "'");
        (*t)[path.back()] = value();
    }

    std::string basic_string()
    {
        expect('"');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n')
                fail("unterminated string");
            const char c = s_[i_++];
            if (c == '"')
                return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            const char e = s_[i_++];
            switch (e) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            default: fail(std::string("unsupported escape \\") + e);
            }
        }
    }
    std::string literal_string()
    {
        expect('\'');
        const std::size_t start = i_;
        while (!eof() && peek() != '\'' && peek() != '\n')
            ++i_;
        if (peek() != '\'')
            fail("unterminated literal string");
        return s_.substr(start, i_++ - start);
    }

    json number_or_word()
    {
        const std::size_t start = i_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string("+-._").find(peek()) != std::string::npos))
            ++i_;
        std::string tok = s_.substr(start, i_ - start);
        if (tok == "true")
            return true;
        if (tok == "false")
            return false;
        if (tok.empty())
            fail("expected a value");
        std::string clean;
        for (char c : tok)
            if (c != '_')
                clean += c;
        std::string body = clean;
        if (!body.empty() && (body[0] == '+' || body[0] == '-'))
            body = body.substr(1);
        if (body == "inf")
            return clean[0] == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        if (body == "nan")
            return std::numeric_limits<double>::quiet_NaN();
        const bool is_float = clean.find_first_of(".eE") != std::string::npos;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double v = std::stod(clean, &used);
                if (used == clean.size())
                    return v;
            } else {
                const long long v = std::stoll(clean, &used);
                if (used == clean.size())
                    return v;
            }
        } catch (const std::exception&) {
        }
        fail("invalid value '" + tok + "'");
    }

    json value()
    {
        const char c = peek();
        if (c == '"')
            return basic_string();
        if (c == '\'')
            return literal_string();
        if (c == '[') {
            ++i_;
            json arr = json::array();
            while (true) {
                skip_ws_comments_newlines();
                if (peek() == ']') {
                    ++i_;
                    return arr;
                }
                arr.push_back(value());
                skip_ws_comments_newlines();
                if (peek() == ',') {
                    ++i_;
                    continue;
                }
                skip_ws_comments_newlines();
                expect(']');
                return arr;
            }
        }
        if (c == '{') {
            ++i_;
            json tab = json::object();
            skip_inline_ws();
            if (peek() == '}') {
                ++i_;
                return tab;
            }
            while (true) {
                key_value(tab);
                skip_inline_ws();
                if (peek() == ',') {
                    ++i_;
                    continue;
                }
                expect('}');
                return tab;
            }
        }
        return number_or_word();
    }
};

std::string type_name(const json& v)
{
    if (v.is_boolean())
        return "boolean";
    if (v.is_number_integer())
        return "integer";
    if (v.is_number())
        return "number";
    if (v.is_string())
        return "string";
    if (v.is_array())
        return "array";
    if (v.is_object())
        return "table";
    return "null";
}

// value must have the type of `proto` (integers are accepted for numbers)
void check_type(const std::string& where, const json& v, const json& proto)
{
    const bool ok = (proto.is_boolean() && v.is_boolean()) || (proto.is_string() && v.is_string()) ||
                    (proto.is_number_integer() && v.is_number_integer()) ||
                    (proto.is_number_float() && v.is_number()) || (proto.is_array() && v.is_array());
    if (!ok)
        throw ConfigError(where + ": expected " + type_name(proto) + ", got " + type_name(v));
    if (proto.is_array() && !proto.empty())
        for (const auto& e : v)
            check_type(where + "[]", e, proto.front());
}

void reject_unknown(const std::string& where, const json& doc, std::initializer_list<const char*> allowed)
{
    if (!doc.is_object())
        throw ConfigError(where + ": expected a table");
    for (const auto& [k, v] : doc.items()) {
        bool known = false;
        for (const char* a : allowed)
            known = known || k == a;
        if (!known)
            throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
}

template <class T>
T get(const json& doc, const char* key, const std::string& where, T fallback)
{
    if (!doc.contains(key))
        return fallback;
    check_type(where + "." + key, doc.at(key), json(fallback));
    return doc.at(key).get<T>();
}

GammaWeights preset(const std::string& name)
{
    try {
        return gamma_preset(name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

GammaWeights parse_gamma(const json& g)
{
    if (g.is_string())
        return preset(g.get<std::string>());
    if (g.is_array()) {
        if (g.size() != 3)
            throw ConfigError("gamma: expected [g1, g2, g3]");
        for (const auto& v : g)
            if (!v.is_number())
                throw ConfigError("gamma: entries must be numbers");
        return gamma_triple(g[0].get<double>(), g[1].get<double>(), g[2].get<double>());
    }
    reject_unknown("gamma", g, {"preset", "g1", "g2", "g3"});
    if (g.contains("preset")) {
        if (g.size() != 1)
            throw ConfigError("gamma: give either a preset or g1, g2, g3");
        check_type("gamma.preset", g["preset"], "");
        return preset(g["preset"].get<std::string>());
    }
    return gamma_triple(get(g, "g1", "gamma", 0.0), get(g, "g2", "gamma", 0.0), get(g, "g3", "gamma", 0.0));
}
} // namespace

nlohmann::json parse_toml(const std::string& text) { return TomlParser(text).parse(); }

nlohmann::json read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    if (!is_json)
        return parse_toml(ss.str());
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("json: ") + e.what());
    }
}

const std::vector<std::string>& experiment_names()
{
    static const std::vector<std::string> names{"identities", "quantize", "pohozaev", "bubbles",
                                                "solve",      "inequalities", "hodge", "singular-slope"};
    return names;
}

nlohmann::json default_params(const std::string& e)
{
    if (e == "identities")
        return {{"samples", 5},        {"field_kmax", 1},      {"field_amplitude", 0.3},
                {"test_amplitude", 1.0}, {"decay", 0.25},      {"tolerance", 1e-6},
                {"q_law_tolerance", 1e-7}};
    if (e == "quantize")
        return {{"alpha_min", -4.0}, {"alpha_max", 2.0}, {"count", 61}, {"flux_radius", 0.5},
                {"alpha_tolerance", 1e-10}, {"flux_tolerance", 1e-8}};
    if (e == "pohozaev")
        return {{"alphas", {-2.0, -0.7, 1.3}}, {"inner", 0.25}, {"outer", 2.0}, {"manufactured", 10},
                {"annulus_tolerance", 1e-8}, {"ball_tolerance", 1e-6}};
    if (e == "bubbles")
        return {{"lambda_min", 100.0}, {"lambda_max", 10000.0}, {"count", 9},    {"delta", 0.5},
                {"k", {1, 2}},         {"tolerance_single", 0.05}, {"tolerance_multi", 0.08},
                {"III_ratio", 0.05}};
    if (e == "solve")
        return {{"eps", {0.1, 0.01, 0.001}}, {"max_iters", 1000}, {"method", "lbfgs"}, {"spread", 0.1}};
    if (e == "inequalities")
        return {{"betas", {6.0, 10.0, 132.0 / 7.0}}, {"samples", 100}, {"coercivity_n", 8},
                {"mt_lambdas", {0.5, 1.0, 2.0}}, {"eps_tilde", 0.1}, {"gamma0", 0.3}};
    if (e == "hodge")
        return {{"eps", {0.1, 0.05, 0.025, 0.0125}}, {"pairs", 10}, {"delta", 0.1}, {"max_spread", 4.0}};
    if (e == "singular-slope")
        return {{"beta", 0.0}, {"widths", {0.4, 0.2, 0.1}}, {"r_min", 0.9}, {"r_max", 3.0}, {"radii", 12},
                {"basis", "quasilinear"}, {"tolerance", 0.03}, {"grad_tol", 1e-9}};
    throw ConfigError("unknown experiment '" + e + "'");
}

ConformalMetric ExperimentConfig::make_metric() const
{
    const Grid4 g(n, L > 0.0 ? L : 2.0 * std::numbers::pi);
    if (metric.source == "flat")
        return ConformalMetric::flat(g);
    if (metric.source == "random")
        return ConformalMetric(random_field(g, metric.recipe, seed + metric.seed_offset));
    ConformalMetric m = read_metric(metric.path);
    if (m.grid() != g)
        throw ConfigError("metric file grid does not match [grid]");
    return m;
}

nlohmann::json ExperimentConfig::canonical() const
{
    json j;
    j["experiment"] = experiment;
    j["gamma"] = {{"g1", gamma.g1}, {"g2", gamma.g2}, {"g3", gamma.g3}, {"preset", gamma.preset}};
    j["grid"] = {{"n", n}, {"L", L > 0.0 ? L : 2.0 * std::numbers::pi}};
    j["metric"] = {{"source", metric.source},
                   {"recipe", metric.recipe.name()},
                   {"seed_offset", metric.seed_offset},
                   {"path", metric.path}};
    j["params"] = params;
    j["seed"] = seed;
    return j; // nlohmann::json objects keep keys sorted
}

ExperimentConfig make_config(const std::string& experiment, const nlohmann::json& doc_in)
{
    const json doc = doc_in.is_null() ? json::object() : doc_in;
    reject_unknown("", doc, {"experiment", "seed", "out", "threads", "gamma", "grid", "metric", "params"});
    ExperimentConfig c;
    c.experiment = experiment;
    c.params = default_params(experiment); // validates the name
    if (doc.contains("experiment")) {
        check_type("experiment", doc["experiment"], "");
        if (doc["experiment"] != experiment)
            throw ConfigError("config is for experiment '" + doc["experiment"].get<std::string>() + "', not '" +
                              experiment + "'");
    }
    if (doc.contains("seed")) {
        check_type("seed", doc["seed"], 0);
        if (doc["seed"].get<long long>() < 0)
            throw ConfigError("seed must be nonnegative");
        c.seed = doc["seed"].get<std::uint64_t>();
    }
    c.out = get(doc, "out", "", c.out);
    c.threads = get(doc, "threads", "", c.threads);
    if (c.threads < 1)
        throw ConfigError("threads must be >= 1");

    c.gamma = gamma_preset("dirac_squared");
    if (experiment == "singular-slope" || experiment == "solve" || experiment == "inequalities")
        c.gamma = gamma_triple(0, 6, 1);
    if (doc.contains("gamma")) {
        try {
            c.gamma = parse_gamma(doc["gamma"]);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("gamma: ") + e.what());
        }
    }

    if (experiment == "singular-slope")
        c.n = 24;
    if (doc.contains("grid")) {
        const json& g = doc["grid"];
        reject_unknown("grid", g, {"n", "L"});
        c.n = get(g, "n", "grid", c.n);
        c.L = get(g, "L", "grid", c.L);
    }
    if (c.n < 4 || c.n % 2 != 0)
        throw ConfigError("grid.n must be an even integer >= 4");
    if (c.L < 0.0 || !std::isfinite(c.L))
        throw ConfigError("grid.L must be positive");

    if (experiment == "identities" || experiment == "solve")
        c.metric.source = "random";
    if (experiment == "solve")
        c.metric.recipe = RandomRecipe{1, 0.15, 0.3};
    if (doc.contains("metric")) {
        const json& m = doc["metric"];
        reject_unknown("metric", m, {"source", "kmax", "amplitude", "decay", "seed_offset", "path"});
        c.metric.source = get(m, "source", "metric", c.metric.source);
        c.metric.recipe.kmax = get(m, "kmax", "metric", c.metric.recipe.kmax);
        c.metric.recipe.amplitude = get(m, "amplitude", "metric", c.metric.recipe.amplitude);
        c.metric.recipe.decay = get(m, "decay", "metric", c.metric.recipe.decay);
        c.metric.seed_offset = std::uint64_t(get(m, "seed_offset", "metric", 0));
        c.metric.path = get(m, "path", "metric", c.metric.path);
    }
    if (c.metric.source != "flat" && c.metric.source != "random" && c.metric.source != "file")
        throw ConfigError("metric.source must be flat, random or file");
    if (c.metric.source == "file" && c.metric.path.empty())
        throw ConfigError("metric.path is required for source = \"file\"");

    if (doc.contains("params")) {
        const json& p = doc["params"];
        if (!p.is_object())
            throw ConfigError("params: expected a table");
        for (const auto& [k, v] : p.items()) {
            if (!c.params.contains(k))
                throw ConfigError("unknown key 'params." + k + "' for experiment " + experiment);
            check_type("params." + k, v, c.params[k]);
            c.params[k] = c.params[k].is_number_float() ? json(v.get<double>()) : v;
        }
    }
    return c;
}

} // namespace ldet::cli
