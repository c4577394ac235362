#include "kgc/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "kgc/binary_io.hpp"
#include "kgc/config.hpp"
#include "kgc/errors.hpp"

namespace kgc {

namespace {

using nlohmann::json;

template <typename M>
struct Slot {
    std::string name;
    M* value;
};

template <typename State>
auto slots(State& state) {
    using M = std::remove_pointer_t<decltype(state.model.tensors().front().value)>;
    std::vector<Slot<M>> out;
    for (auto& t : state.model.tensors()) out.push_back({t.name, t.value});
    for (auto& t : state.adam.m.tensors()) out.push_back({"adam.m." + t.name, t.value});
    for (auto& t : state.adam.v.tensors()) out.push_back({"adam.v." + t.name, t.value});
    return out;
}

json history_json(const std::vector<EpochMetrics>& h) {
    json out = json::array();
    for (const auto& m : h)
        out.push_back({{"epoch", m.epoch},
                       {"loss", m.mean.total},
                       {"hr_t", m.mean.hr_t},
                       {"hp_t", m.mean.hp_t},
                       {"hrs_t", m.mean.hrs_t},
                       {"hrs_p", m.mean.hrs_p},
                       {"lr", m.lr},
                       {"tau", m.tau}});
    return out;
}

std::vector<EpochMetrics> history_from_json(const json& j) {
    std::vector<EpochMetrics> out;
    for (const auto& e : j) {
        EpochMetrics m;
        m.epoch = e.at("epoch").get<std::size_t>();
        m.mean.total = e.at("loss").get<double>();
        m.mean.hr_t = e.at("hr_t").get<double>();
        m.mean.hp_t = e.at("hp_t").get<double>();
        m.mean.hrs_t = e.at("hrs_t").get<double>();
        m.mean.hrs_p = e.at("hrs_p").get<double>();
        m.lr = e.at("lr").get<double>();
        m.tau = e.at("tau").get<double>();
        out.push_back(m);
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config) {
    std::filesystem::create_directories(dir);
    json tensors = json::array();
    std::uint64_t offset = 0;
    std::ofstream blob(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw ParseError("cannot write " + (dir / "tensors.bin").string());
    for (const auto& s : slots(state)) {
        const auto bytes = static_cast<std::uint64_t>(s.value->size()) * sizeof(double);
        tensors.push_back({{"name", s.name},
                           {"shape", {s.value->rows(), s.value->cols()}},
                           {"offset", offset},
                           {"bytes", bytes}});
        blob.write(reinterpret_cast<const char*>(s.value->data()), static_cast<std::streamsize>(bytes));
        offset += bytes;
    }
    if (!blob) throw ParseError("write failed: tensors.bin");

    std::ostringstream rng;
    rng << state.rng;
    const json manifest = {{"format", "kgc-checkpoint"},
                           {"version", kCheckpointVersion},
                           {"dtype", "float64-le"},
                           {"dims",
                            {{"num_entities", state.model.dims.num_entities},
                             {"num_relations", state.model.dims.num_relations}}},
                           {"config", train_config_to_json(config)},
                           {"epoch", state.epoch},
                           {"adam_step", state.adam.step},
                           {"rng_state", rng.str()},
                           {"history", history_json(state.history)},
                           {"blob_bytes", offset},
                           {"tensors", tensors}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw ParseError("write failed: manifest.json");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IntegrityError("missing manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IntegrityError(std::string("manifest.json: ") + e.what());
    }

    try {
        if (manifest.at("format") != "kgc-checkpoint") throw IntegrityError("not a kgc checkpoint");
        if (manifest.at("version").get<int>() != kCheckpointVersion)
            throw IntegrityError("checkpoint version " + manifest.at("version").dump() + " unsupported");
        if (manifest.at("dtype") != "float64-le") throw IntegrityError("unsupported dtype");

        Checkpoint ck;
        ck.config = train_config_from_json(manifest.at("config"));
        ModelDims dims;
        dims.num_entities = manifest.at("dims").at("num_entities").get<std::size_t>();
        dims.num_relations = manifest.at("dims").at("num_relations").get<std::size_t>();
        dims.encoder = ck.config.encoder;
        dims.soft = ck.config.soft;
        ck.state.model = Model::initialize(dims, 0, ck.config.tau_init);
        ck.state.adam = AdamState::for_model(ck.state.model);

        const auto blob_path = dir / "tensors.bin";
        std::error_code ec;
        const auto blob_size = std::filesystem::file_size(blob_path, ec);
        if (ec) throw IntegrityError("missing tensors.bin in " + dir.string());
        if (blob_size != manifest.at("blob_bytes").get<std::uint64_t>())
            throw IntegrityError("tensors.bin is " + std::to_string(blob_size) + " bytes, manifest expects " +
                                 manifest.at("blob_bytes").dump());
        std::ifstream blob(blob_path, std::ios::binary);

        std::map<std::string, json> listed;
        for (const auto& t : manifest.at("tensors")) listed[t.at("name").get<std::string>()] = t;
        auto targets = slots(ck.state);
        if (listed.size() != targets.size()) throw IntegrityError("manifest tensor count mismatch");
        for (auto& s : targets) {
            const auto it = listed.find(s.name);
            if (it == listed.end()) throw IntegrityError("manifest lacks tensor " + s.name);
            const auto& t = it->second;
            const auto shape = t.at("shape");
            if (shape.at(0).get<Eigen::Index>() != s.value->rows() || shape.at(1).get<Eigen::Index>() != s.value->cols())
                throw IntegrityError("tensor " + s.name + " has unexpected shape " + shape.dump());
            const auto offset = t.at("offset").get<std::uint64_t>();
            const auto bytes = t.at("bytes").get<std::uint64_t>();
            if (bytes != static_cast<std::uint64_t>(s.value->size()) * sizeof(double) || offset + bytes > blob_size)
                throw IntegrityError("tensor " + s.name + " lies outside tensors.bin");
            blob.seekg(static_cast<std::streamoff>(offset));
            blob.read(reinterpret_cast<char*>(s.value->data()), static_cast<std::streamsize>(bytes));
            if (!blob) throw IntegrityError("short read for tensor " + s.name);
        }

        ck.state.epoch = manifest.at("epoch").get<std::size_t>();
        ck.state.adam.step = manifest.at("adam_step").get<std::size_t>();
        std::istringstream rng(manifest.at("rng_state").get<std::string>());
        rng >> ck.state.rng;
        if (!rng) throw IntegrityError("bad rng_state");
        ck.state.history = history_from_json(manifest.at("history"));
        return ck;
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("manifest.json: ") + e.what());
    }
}

namespace {
constexpr char kEmbMagic[5] = "KGEV";
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

void save_embeddings(const std::filesystem::path& path, const Mat& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    binio::put_magic(out, kEmbMagic, kEmbVersion);
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!out) throw ParseError("write failed: " + path.string());
}

Mat load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    binio::expect_magic(in, kEmbMagic, kEmbVersion);
    const auto rows = binio::get<std::uint64_t>(in);
    const auto cols = binio::get<std::uint64_t>(in);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw IntegrityError("truncated embedding file " + path.string());
    in.peek();
    if (!in.eof()) throw IntegrityError("trailing bytes in " + path.string());
    return m;
}

}  // namespace kgc
