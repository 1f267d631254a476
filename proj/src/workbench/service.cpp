#include "reservoir/workbench/service.hpp"

#include <httplib.h>

#include <sstream>

#include "reservoir/workbench/serialize.hpp"

namespace reservoir::workbench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
}

void error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
}

json run_view(const RunRecord& r) {
    json j = r;
    return j;
}

}  // namespace

Service::Service(ServiceOptions options)
    : options_(std::move(options)), registry_(options_.root), server_(std::make_unique<httplib::Server>()) {
    fs::create_directories(options_.root / "datasets");
    for (const auto& r : registry_.list()) {
        if (r.status == RunStatus::Running)
            registry_.update(r.id, [](RunRecord& x) {
                x.status = RunStatus::Failed;
                x.error = "interrupted: service stopped while the run was executing";
                x.finished = utc_now();
            });
        else if (r.status == RunStatus::Queued)
            queue_.push_back(r.id);
    }
    for (unsigned n = 0; n < std::max(1u, options_.workers); ++n) workers_.emplace_back([this] { work(); });
    routes();
}

Service::~Service() {
    stop();
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
}

std::string Service::submit(const json& config) {
    const auto parsed = parse_run_config(config, options_.root / "datasets", options_.root / "datasets");
    load_run_data(parsed);
    std::lock_guard lock(mu_);
    if (queue_.size() >= options_.queue_depth)
        throw QueueFull("queue full (" + std::to_string(options_.queue_depth) + " runs waiting)");
    const auto r = registry_.create(config);
    queue_.push_back(r.id);
    cv_.notify_one();
    return r.id;
}

bool Service::cancel(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto r = registry_.find(id);
    if (!r) return false;
    if (r->status != RunStatus::Queued)
        throw std::logic_error("run " + id + " is " + to_string(r->status) + " and cannot be cancelled");
    queue_.erase(std::remove(queue_.begin(), queue_.end(), id), queue_.end());
    registry_.update(id, [](RunRecord& x) {
        x.status = RunStatus::Failed;
        x.error = "cancelled before start";
        x.finished = utc_now();
    });
    idle_cv_.notify_all();
    return true;
}

void Service::wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [&] { return queue_.empty() && active_ == 0; });
}

void Service::work() {
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            ++active_;
            registry_.update(id, [](RunRecord& x) {
                x.status = RunStatus::Running;
                x.started = utc_now();
            });
        }
        const auto record = registry_.find(id);
        try {
            const auto config =
                parse_run_config(record->config, options_.root / "datasets", options_.root / "datasets");
            const auto dir = registry_.run_dir(id);
            auto summary = execute_run(config, dir);
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file()) files.push_back(e.path().filename().string());
            std::sort(files.begin(), files.end());
            registry_.update(id, [&](RunRecord& x) {
                x.status = RunStatus::Done;
                x.finished = utc_now();
                x.results = files;
                x.summary = summary;
            });
        } catch (const std::exception& e) {
            registry_.update(id, [&](RunRecord& x) {
                x.status = RunStatus::Failed;
                x.finished = utc_now();
                x.error = e.what();
            });
        }
        std::lock_guard lock(mu_);
        --active_;
        idle_cv_.notify_all();
    }
}

void Service::routes() {
    auto& s = *server_;
    s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
        if (req.method == "OPTIONS") {
            res.status = 204;
            return httplib::Server::HandlerResponse::Handled;
        }
        if (!options_.token.empty() && req.get_header_value("Authorization") != "Bearer " + options_.token) {
            error(res, 401, "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    s.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
        json config;
        try {
            config = json::parse(req.body);
        } catch (const std::exception& e) {
            return error(res, 400, std::string("body is not JSON: ") + e.what());
        }
        try {
            const auto id = submit(config);
            reply(res, 201, {{"id", id}, {"status", "queued"}});
        } catch (const ConfigError& e) {
            reply(res, 400, e.to_json());
        } catch (const QueueFull& e) {
            error(res, 503, e.what());
        }
    });

    s.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& r : registry_.list())
            out.push_back({{"id", r.id}, {"status", to_string(r.status)}, {"created", r.created},
                           {"finished", r.finished}, {"solver", r.config.value("solver", "")},
                           {"name", r.config.value("name", "")}});
        reply(res, 200, out);
    });

    s.Get(R"(/runs/([A-Za-z0-9-]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto r = registry_.find(req.matches[1]);
        if (!r) return error(res, 404, "no run " + std::string(req.matches[1]));
        reply(res, 200, run_view(*r));
    });

    auto artifact = [this](const char* file) {
        return [this, file](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto r = registry_.find(id);
            if (!r) return error(res, 404, "no run " + id);
            if (r->status != RunStatus::Done) return error(res, 409, "run " + id + " is " + to_string(r->status));
            auto dir = registry_.run_dir(id);
            if (req.has_param("child")) {
                const auto child = req.get_param_value("child");
                if (child.empty() || child.find_first_not_of("0123456789") != std::string::npos)
                    return error(res, 400, "child must be an entry index");
                char name[16];
                std::snprintf(name, sizeof name, "%03d", std::stoi(child));
                dir = dir / "children" / name;
            }
            const auto path = dir / file;
            if (!fs::exists(path)) return error(res, 404, std::string(file) + " not available for this run");
            res.status = 200;
            res.set_content(read_file(path), "application/json");
        };
    };
    s.Get(R"(/runs/([A-Za-z0-9-]+)/series)", artifact("series.json"));
    s.Get(R"(/runs/([A-Za-z0-9-]+)/policy)", artifact("policy.json"));

    s.Post(R"(/runs/([A-Za-z0-9-]+)/cancel)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        try {
            if (!cancel(id)) return error(res, 404, "no run " + id);
        } catch (const std::logic_error& e) {
            return error(res, 409, e.what());
        }
        reply(res, 200, run_view(*registry_.find(id)));
    });

    s.Get("/pareto", [this](const httplib::Request& req, httplib::Response& res) {
        std::vector<std::string> ids;
        if (req.has_param("ids")) {
            std::stringstream ss(req.get_param_value("ids"));
            std::string id;
            while (std::getline(ss, id, ','))
                if (!id.empty()) ids.push_back(id);
        } else {
            for (const auto& r : registry_.list())
                if (r.status == RunStatus::Done) ids.push_back(r.id);
        }
        json rows = json::array();
        std::vector<Deviations> sums;
        json skipped = json::array();
        for (const auto& id : ids) {
            const auto r = registry_.find(id);
            if (!r) return error(res, 404, "no run " + id);
            if (r->status != RunStatus::Done) {
                skipped.push_back({{"id", id}, {"reason", "run is " + to_string(r->status)}});
                continue;
            }
            auto add = [&](const std::string& label, const json& summary) {
                rows.push_back({{"id", label},
                                {"weights", summary.at("weights")},
                                {"deviation_sums", summary.at("deviation_sums")},
                                {"total_cost", summary.at("total_cost")}});
                sums.push_back(summary.at("deviation_sums").get<Deviations>());
            };
            if (r->summary.value("solver", "") == "moss") {
                for (const auto& e : r->summary.at("entries"))
                    if (e.at("ok").get<bool>()) {
                        char name[16];
                        std::snprintf(name, sizeof name, "%03zu", e.at("index").get<std::size_t>());
                        add(id + "/" + name, e);
                    }
            } else if (r->summary.value("empty_policy", false)) {
                skipped.push_back({{"id", id}, {"reason", "empty policy"}});
            } else {
                add(id, r->summary);
            }
        }
        const auto keep = pareto_filter(sums);
        for (std::size_t n = 0; n < rows.size(); ++n)
            rows[n]["dominated"] = std::find(keep.begin(), keep.end(), n) == keep.end();
        reply(res, 200, {{"rows", rows}, {"skipped", skipped}});
    });

    s.Get("/datasets", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(options_.root / "datasets"))
            if (e.is_directory() && fs::exists(e.path() / "series.csv")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs)
            out.push_back({{"name", d.filename().string()},
                           {"demands", fs::exists(d / "demands.csv")},
                           {"system", fs::exists(d / "system.json")}});
        reply(res, 200, out);
    });

    s.Get("/", [](const httplib::Request&, httplib::Response& res) {
        reply(res, 200,
              {{"endpoints",
                {"POST /runs", "GET /runs", "GET /runs/{id}", "GET /runs/{id}/series",
                 "GET /runs/{id}/policy", "POST /runs/{id}/cancel", "GET /pareto?ids=", "GET /datasets"}}});
    });
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

int Service::start(const std::string& host) {
    const int port = server_->bind_to_any_port(host);
    if (port < 0) throw std::runtime_error("cannot bind " + host);
    http_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::stop() {
    if (server_) server_->stop();
    if (http_thread_.joinable()) http_thread_.join();
}

}  // namespace reservoir::workbench
