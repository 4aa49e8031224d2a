#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "fbsde/benchmarks.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/harness.hpp"
#include "fbsde/solvers.hpp"

namespace py = pybind11;
using namespace fbsde;

namespace {

MarketConfig make_market(double rate, const std::vector<double>& spots,
                         const std::vector<double>& dividends, const std::vector<double>& vols,
                         const Eigen::MatrixXd& correlation) {
    MarketConfig market;
    market.rate = rate;
    for (std::size_t i = 0; i < spots.size(); ++i)
        market.assets.push_back({spots[i], dividends[i], vols[i]});
    market.correlation = correlation;
    market.validate();
    return market;
}

TimeGrid make_grid(double maturity, int steps, const std::vector<int>& event_indices) {
    TimeGrid grid{maturity, steps, event_indices};
    grid.validate();
    return grid;
}

// std::variant would be auto-converted by the stl caster; a holder keeps the
// contract opaque on the python side.
struct PyContract {
    ContractSpec spec;
};

py::dict report_to_dict(const SolverReport& report) {
    py::dict d;
    d["price"] = report.price;
    d["dispersion"] = report.dispersion;
    d["wall_clock_seconds"] = report.wall_clock_seconds;
    d["seed"] = report.seed;
    d["loss_history"] = report.loss_history;
    py::list history;
    for (const auto& s : report.validation_history)
        history.append(py::make_tuple(s.iteration, s.loss, s.price));
    d["validation_history"] = history;
    return d;
}

py::array_t<double> states_array(const PathBatch& batch) {
    const auto n = static_cast<py::ssize_t>(batch.states.size());
    const py::ssize_t m = batch.num_paths;
    const py::ssize_t d = batch.states[0].cols();
    py::array_t<double> out({m, n, d});
    auto view = out.mutable_unchecked<3>();
    for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < m; ++j)
            for (py::ssize_t a = 0; a < d; ++a) view(j, i, a) = batch.states[i](j, a);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "FBSDE derivative pricing core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<MarketConfig>(m, "MarketConfig")
        .def(py::init(&make_market), py::arg("rate"), py::arg("spots"), py::arg("dividends"),
             py::arg("vols"), py::arg("correlation"))
        .def_readonly("rate", &MarketConfig::rate)
        .def_property_readonly("dim", &MarketConfig::dim);

    py::class_<TimeGrid>(m, "TimeGrid")
        .def(py::init(&make_grid), py::arg("maturity"), py::arg("steps"),
             py::arg("event_indices") = std::vector<int>{})
        .def_readonly("maturity", &TimeGrid::maturity)
        .def_readonly("steps", &TimeGrid::steps);

    py::class_<PyContract>(m, "ContractSpec")
        .def_property_readonly("label",
                               [](const PyContract& c) { return contract_label(c.spec); })
        .def_property_readonly("dim",
                               [](const PyContract& c) { return contract_dim(c.spec); });

    m.def(
        "european_basket_call",
        [](std::vector<double> weights, double strike) {
            return PyContract{EuropeanBasketCall{std::move(weights), strike}};
        },
        py::arg("weights"), py::arg("strike"));
    m.def(
        "bermudan_basket_call",
        [](std::vector<double> weights, double strike,
           std::vector<int> exercise_indices) {
            return PyContract{
                BermudanBasketCall{std::move(weights), strike, std::move(exercise_indices)}};
        },
        py::arg("weights"), py::arg("strike"), py::arg("exercise_indices"));
    m.def(
        "callable_yield_note",
        [](double notional, std::vector<double> coupon_rates,
           std::vector<double> coupon_barriers, double knockin_barrier, double put_strike,
           std::vector<int> schedule_indices, std::vector<double> initial_spots) {
            return PyContract{CallableYieldNote{notional,
                                                std::move(coupon_rates),
                                                std::move(coupon_barriers),
                                                knockin_barrier,
                                                put_strike,
                                                std::move(schedule_indices),
                                                std::move(initial_spots)}};
        },
        py::arg("notional"), py::arg("coupon_rates"), py::arg("coupon_barriers"),
        py::arg("knockin_barrier"), py::arg("put_strike"), py::arg("schedule_indices"),
        py::arg("initial_spots"));

    py::class_<TrainingProtocol>(m, "TrainingProtocol")
        .def(py::init([](int iterations, int validate_every, int select_count, int batch_size,
                         std::uint64_t seed) {
                 TrainingProtocol p;
                 p.iterations = iterations;
                 p.validate_every = validate_every;
                 p.select_count = select_count;
                 p.batch_size = batch_size;
                 p.seed = seed;
                 return p;
             }),
             py::arg("iterations") = 5000, py::arg("validate_every") = 100,
             py::arg("select_count") = 10, py::arg("batch_size") = 5000, py::arg("seed") = 0)
        .def_readwrite("iterations", &TrainingProtocol::iterations)
        .def_readwrite("validate_every", &TrainingProtocol::validate_every)
        .def_readwrite("select_count", &TrainingProtocol::select_count)
        .def_readwrite("batch_size", &TrainingProtocol::batch_size)
        .def_readwrite("seed", &TrainingProtocol::seed)
        .def_readwrite("learning_rate", &TrainingProtocol::learning_rate);

    m.def("full_protocol", &full_protocol, py::arg("seed") = 0);
    m.def("efficiency_protocol", &efficiency_protocol, py::arg("seed") = 0);

    m.def("black_scholes_call", &black_scholes_call, py::arg("spot"), py::arg("strike"),
          py::arg("rate"), py::arg("dividend"), py::arg("vol"), py::arg("maturity"));

    m.def(
        "simulate_paths",
        [](const MarketConfig& market, const TimeGrid& grid, int num_paths, std::uint64_t seed) {
            return states_array(simulate_paths(market, grid, num_paths, seed));
        },
        py::arg("market"), py::arg("grid"), py::arg("num_paths"), py::arg("seed"),
        "Correlated Euler GBM paths as an (paths, steps+1, assets) array");

    m.def(
        "lsq_monte_carlo",
        [](const MarketConfig& market, const TimeGrid& grid, const PyContract& contract,
           long num_paths, std::uint64_t seed) {
            const McResult r = lsq_monte_carlo(market, grid, contract.spec, num_paths, seed);
            return py::make_tuple(r.price, r.standard_error);
        },
        py::arg("market"), py::arg("grid"), py::arg("contract"), py::arg("num_paths"),
        py::arg("seed"), "Returns (price, standard_error)");

    m.def("crank_nicolson_1d",
          [](const MarketConfig& market, const TimeGrid& grid, const PyContract& contract) {
              return crank_nicolson_1d(market, grid, contract.spec);
          },
          py::arg("market"), py::arg("grid"), py::arg("contract"));

    m.def(
        "forward_dnn_solve",
        [](const MarketConfig& market, const TimeGrid& grid, const PyContract& contract,
           const TrainingProtocol& protocol) {
            SolverReport report;
            {
                py::gil_scoped_release release;
                report = forward_dnn_solve(market, grid, contract.spec, protocol);
            }
            return report_to_dict(report);
        },
        py::arg("market"), py::arg("grid"), py::arg("contract"), py::arg("protocol"));

    m.def(
        "lsq_backward_dnn_solve",
        [](const MarketConfig& market, const TimeGrid& grid, const PyContract& contract,
           const TrainingProtocol& protocol) {
            SolverReport report;
            {
                py::gil_scoped_release release;
                report = lsq_backward_dnn_solve(market, grid, contract.spec, protocol);
            }
            return report_to_dict(report);
        },
        py::arg("market"), py::arg("grid"), py::arg("contract"), py::arg("protocol"));

    m.def(
        "run_price_json",
        [](const std::string& config_json) {
            const ReportRecord r = run_price(parse_config(nlohmann::json::parse(config_json)));
            py::dict d;
            d["method"] = r.method;
            d["contract"] = r.contract;
            d["dims"] = r.dims;
            d["price"] = r.price;
            d["dispersion"] = r.dispersion;
            d["wall_clock_s"] = r.wall_clock_s;
            d["seed"] = r.seed;
            d["config_hash"] = r.config_hash;
            return d;
        },
        py::arg("config_json"), "Price from a JSON config string (same schema as the CLI)");

    m.def("reference_market", &reference_market, py::arg("dims"));
    m.def(
        "reference_european",
        [](int dims) { return PyContract{reference_european(dims)}; }, py::arg("dims"));
    m.def(
        "reference_bermudan",
        [](int dims, const TimeGrid& grid) { return PyContract{reference_bermudan(dims, grid)}; },
        py::arg("dims"), py::arg("grid"));
    m.def(
        "reference_cyn",
        [](int dims, const TimeGrid& grid) { return PyContract{reference_cyn(dims, grid)}; },
        py::arg("dims"), py::arg("grid"));
}
