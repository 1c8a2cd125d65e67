#include "ovd/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ovd::io {

namespace {

using nlohmann::json;

void open_out(std::ofstream& f, const std::string& path) {
  f.open(path);
  if (!f) throw PathError("cannot open for writing: " + path);
}

void open_in(std::ifstream& f, const std::string& path) {
  f.open(path);
  if (!f) throw PathError("cannot open for reading: " + path);
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
  return Box{j.at(0).get<double>(), j.at(1).get<double>(),
             j.at(2).get<double>(), j.at(3).get<double>()};
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    rows.push_back(vec_to_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(j.at(0).size()));
  for (Eigen::Index r = 0; r < rows; ++r)
    m.row(r) = vec_from_json(j.at(static_cast<size_t>(r))).transpose();
  return m;
}

json preset_to_json(const ProposalPreset& p) {
  return json{{"name", p.name},
              {"count", p.count},
              {"jitter", p.jitter},
              {"score_noise", p.score_noise},
              {"iou_weight", p.iou_weight},
              {"background_frac", p.background_frac}};
}

ProposalPreset preset_from_json(const json& j) {
  ProposalPreset p;
  p.name = j.at("name").get<std::string>();
  p.count = j.at("count").get<int>();
  p.jitter = j.at("jitter").get<double>();
  p.score_noise = j.at("score_noise").get<double>();
  p.iou_weight = j.at("iou_weight").get<double>();
  p.background_frac = j.at("background_frac").get<double>();
  return p;
}

json world_config_to_json(const WorldConfig& c) {
  return json{{"num_classes", c.num_classes},
              {"num_base", c.num_base},
              {"latent_dim", c.latent_dim},
              {"embed_dim", c.embed_dim},
              {"feature_dim", c.feature_dim},
              {"latent_noise", c.latent_noise},
              {"teacher_noise", c.teacher_noise},
              {"student_noise", c.student_noise},
              {"context_mix", c.context_mix},
              {"novel_object_frac", c.novel_object_frac},
              {"proto_cos_cap", c.proto_cos_cap},
              {"bounds", box_to_json(c.bounds)},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"min_box_size", c.min_box_size},
              {"max_box_size", c.max_box_size},
              {"det_scenes", c.det_scenes},
              {"cls_scenes", c.cls_scenes},
              {"eval_scenes", c.eval_scenes},
              {"mvit", preset_to_json(c.mvit)},
              {"rpn", preset_to_json(c.rpn)},
              {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j) {
  WorldConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.num_base = j.at("num_base").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.latent_noise = j.at("latent_noise").get<double>();
  c.teacher_noise = j.at("teacher_noise").get<double>();
  c.student_noise = j.at("student_noise").get<double>();
  c.context_mix = j.at("context_mix").get<double>();
  c.novel_object_frac = j.at("novel_object_frac").get<double>();
  c.proto_cos_cap = j.at("proto_cos_cap").get<double>();
  c.bounds = box_from_json(j.at("bounds"));
  c.min_objects = j.at("min_objects").get<int>();
  c.max_objects = j.at("max_objects").get<int>();
  c.min_box_size = j.at("min_box_size").get<double>();
  c.max_box_size = j.at("max_box_size").get<double>();
  c.det_scenes = j.at("det_scenes").get<int>();
  c.cls_scenes = j.at("cls_scenes").get<int>();
  c.eval_scenes = j.at("eval_scenes").get<int>();
  c.mvit = preset_from_json(j.at("mvit"));
  c.rpn = preset_from_json(j.at("rpn"));
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

void write_matrix(std::ofstream& f, const char* name,
                  const Eigen::MatrixXd& m) {
  f << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) f << ' ';
      f << fmt_hex(m(r, c));
    }
    f << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::ifstream& f, const std::string& expect_name) {
  std::string kw, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(f >> kw >> name >> rows >> cols) || kw != "matrix" ||
      name != expect_name)
    throw ParseError("checkpoint: expected matrix " + expect_name);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::string tok;
      if (!(f >> tok)) throw ParseError("checkpoint: truncated matrix");
      m(r, c) = std::strtod(tok.c_str(), nullptr);
    }
  return m;
}

}  // namespace

void save_text_bank(const TextBank& bank, const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  f << bank.num_classes() << ' ' << bank.dim() << '\n';
  for (Eigen::Index r = 0; r < bank.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < bank.rows.cols(); ++c) {
      if (c) f << ' ';
      f << fmt_g17(bank.rows(r, c));
    }
    f << '\n';
  }
}

TextBank load_text_bank(const std::string& path) {
  std::ifstream f;
  open_in(f, path);
  Eigen::Index rows = 0, cols = 0;
  if (!(f >> rows >> cols) || rows < 1 || cols < 1)
    throw ParseError("text bank: bad header in " + path);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(f >> m(r, c))) throw ParseError("text bank: truncated " + path);
  return TextBank{std::move(m), true};
}

void save_world(const World& w, const std::string& path) {
  json j{{"v", 1},
         {"config", world_config_to_json(w.cfg)},
         {"prototypes", mat_to_json(w.prototypes)},
         {"teacher_map", mat_to_json(w.teacher_map)},
         {"student_map", mat_to_json(w.student_map)}};
  std::ofstream f;
  open_out(f, path);
  f << j.dump(2) << '\n';
}

World load_world(const std::string& path) {
  json j = json::parse(slurp(path));
  World w;
  w.cfg = world_config_from_json(j.at("config"));
  w.prototypes = mat_from_json(j.at("prototypes"));
  w.teacher_map = mat_from_json(j.at("teacher_map"));
  w.student_map = mat_from_json(j.at("student_map"));
  return w;
}

void save_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  for (const Scene& s : scenes) {
    json objs = json::array();
    for (const SceneObject& o : s.objects)
      objs.push_back(json{{"box", box_to_json(o.box)},
                          {"class", o.class_id},
                          {"latent", vec_to_json(o.latent)}});
    json j{{"v", 1},
           {"id", s.id},
           {"kind", s.kind == SceneKind::detection ? "det" : "cls"},
           {"bounds", box_to_json(s.bounds)},
           {"objects", objs},
           {"context", vec_to_json(s.context)},
           {"labels", s.image_labels}};
    f << j.dump() << '\n';
  }
}

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream f;
  open_in(f, path);
  std::vector<Scene> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Scene s;
    s.id = j.at("id").get<uint64_t>();
    s.kind = j.at("kind").get<std::string>() == "det"
                 ? SceneKind::detection
                 : SceneKind::classification;
    s.bounds = box_from_json(j.at("bounds"));
    for (const json& oj : j.at("objects")) {
      SceneObject o;
      o.box = box_from_json(oj.at("box"));
      o.class_id = oj.at("class").get<int>();
      o.latent = vec_from_json(oj.at("latent"));
      s.objects.push_back(std::move(o));
    }
    s.context = vec_from_json(j.at("context"));
    s.image_labels = j.at("labels").get<std::vector<int>>();
    out.push_back(std::move(s));
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  const HeadParams& p = ckpt.params;
  f << "ovd-checkpoint v1\n";
  f << "stage " << stage_name(p.stage) << '\n';
  f << "use_transfer " << (p.use_transfer ? 1 : 0) << '\n';
  f << "world_seed " << ckpt.world_seed << '\n';
  f << "slope " << fmt_hex(p.transfer.slope) << ' ' << fmt_hex(p.skip.slope)
    << '\n';
  write_matrix(f, "w_d", p.w_d.matrix);
  write_matrix(f, "reg_weights", p.reg_weights);
  write_matrix(f, "w_theta1", p.transfer.w_theta1);
  write_matrix(f, "w_theta2", p.transfer.w_theta2);
  write_matrix(f, "skip_w1", p.skip.w1);
  write_matrix(f, "skip_w2", p.skip.w2);
  f << "rng " << ckpt.rng_state << '\n';
  f << "end\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!file_exists(path)) throw MissingCheckpoint("no checkpoint: " + path);
  std::ifstream f;
  open_in(f, path);
  std::string magic, version;
  f >> magic >> version;
  if (magic != "ovd-checkpoint" || version != "v1")
    throw ParseError("not a checkpoint: " + path);
  Checkpoint ckpt;
  HeadParams& p = ckpt.params;
  std::string kw, val;
  f >> kw >> val;
  if (kw != "stage") throw ParseError("checkpoint: missing stage");
  p.stage = stage_from_name(val);
  int use_transfer = 1;
  f >> kw >> use_transfer;
  if (kw != "use_transfer") throw ParseError("checkpoint: missing use_transfer");
  p.use_transfer = use_transfer != 0;
  f >> kw >> ckpt.world_seed;
  if (kw != "world_seed") throw ParseError("checkpoint: missing world_seed");
  std::string s1, s2;
  f >> kw >> s1 >> s2;
  if (kw != "slope") throw ParseError("checkpoint: missing slope");
  p.transfer.slope = std::strtod(s1.c_str(), nullptr);
  p.skip.slope = std::strtod(s2.c_str(), nullptr);
  p.w_d.matrix = read_matrix(f, "w_d");
  p.w_d.frozen = p.stage == Stage::wt;
  p.reg_weights = read_matrix(f, "reg_weights");
  p.transfer.w_theta1 = read_matrix(f, "w_theta1");
  p.transfer.w_theta2 = read_matrix(f, "w_theta2");
  p.skip.w1 = read_matrix(f, "skip_w1");
  p.skip.w2 = read_matrix(f, "skip_w2");
  f >> kw;
  if (kw != "rng") throw ParseError("checkpoint: missing rng state");
  std::getline(f, ckpt.rng_state);
  if (!ckpt.rng_state.empty() && ckpt.rng_state.front() == ' ')
    ckpt.rng_state.erase(0, 1);
  return ckpt;
}

void save_pseudo_labels(const PseudoLabelCache& labels,
                        const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  for (const auto& [scene_id, list] : labels)
    for (const PseudoBoxLabel& pl : list) {
      const Box& b = pl.proposal.box;
      f << scene_id << ' ' << pl.class_id << ' ' << fmt_g17(b.x1) << ' '
        << fmt_g17(b.y1) << ' ' << fmt_g17(b.x2) << ' ' << fmt_g17(b.y2) << ' '
        << fmt_g17(pl.proposal.score) << '\n';
    }
}

PseudoLabelCache load_pseudo_labels(const std::string& path) {
  std::ifstream f;
  open_in(f, path);
  PseudoLabelCache out;
  uint64_t scene_id = 0;
  PseudoBoxLabel pl;
  while (f >> scene_id >> pl.class_id >> pl.proposal.box.x1 >>
         pl.proposal.box.y1 >> pl.proposal.box.x2 >> pl.proposal.box.y2 >>
         pl.proposal.score)
    out[scene_id].push_back(pl);
  return out;
}

void save_teacher_cache(const TeacherCache& cache, const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  for (const auto& [scene_id, rec] : cache)
    for (size_t k = 0; k < rec.boxes.size(); ++k) {
      const Box& b = rec.boxes[k];
      f << scene_id << ' ' << k << ' ' << fmt_g17(b.x1) << ' ' << fmt_g17(b.y1)
        << ' ' << fmt_g17(b.x2) << ' ' << fmt_g17(b.y2);
      for (Eigen::Index d = 0; d < rec.teacher.cols(); ++d)
        f << ' ' << fmt_g17(rec.teacher(static_cast<Eigen::Index>(k), d));
      f << '\n';
    }
}

TeacherCache load_teacher_cache(const std::string& path) {
  std::ifstream f;
  open_in(f, path);
  TeacherCache out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    uint64_t scene_id = 0;
    size_t k = 0;
    Box b;
    if (!(ss >> scene_id >> k >> b.x1 >> b.y1 >> b.x2 >> b.y2))
      throw ParseError("teacher cache: bad record in " + path);
    std::vector<double> emb;
    double v = 0.0;
    while (ss >> v) emb.push_back(v);
    DistillRecord& rec = out[scene_id];
    if (rec.boxes.size() != k)
      throw ParseError("teacher cache: non-sequential k in " + path);
    rec.boxes.push_back(b);
    Eigen::MatrixXd grown(static_cast<Eigen::Index>(k + 1),
                          static_cast<Eigen::Index>(emb.size()));
    if (k > 0) grown.topRows(static_cast<Eigen::Index>(k)) = rec.teacher;
    for (size_t d = 0; d < emb.size(); ++d)
      grown(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) =
          emb[d];
    rec.teacher = std::move(grown);
  }
  return out;
}

void save_train_log(const std::vector<TrainLogRow>& rows,
                    const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  f << "epoch,lr,cls,reg,l1,irm,pms,total,wall_s\n";
  for (const TrainLogRow& r : rows)
    f << r.epoch << ',' << fmt_g17(r.lr) << ',' << fmt_g17(r.cls) << ','
      << fmt_g17(r.reg) << ',' << fmt_g17(r.l1) << ',' << fmt_g17(r.irm) << ','
      << fmt_g17(r.pms) << ',' << fmt_g17(r.total) << ',' << fmt_g17(r.wall_s)
      << '\n';
}

void save_eval_report(const EvalReport& rep, const ClassSplit& split,
                      const std::string& path) {
  std::ofstream f;
  open_out(f, path);
  f << "class_id,group,ap\n";
  for (int c = 0; c < split.num_total; ++c) {
    if (!rep.class_has_gt[static_cast<size_t>(c)]) continue;
    f << c << ',' << (split.is_novel(c) ? "novel" : "base") << ','
      << fmt_g17(rep.per_class_ap[static_cast<size_t>(c)]) << '\n';
  }
  f << "AP_BASE,base," << fmt_g17(rep.ap_base) << '\n';
  f << "AP_NOVEL,novel," << fmt_g17(rep.ap_novel) << '\n';
  f << "AP_ALL,all," << fmt_g17(rep.ap_all) << '\n';
  if (rep.top1) {
    f << "TOP1_BASE,base," << fmt_g17(rep.top1->base) << '\n';
    f << "TOP1_NOVEL,novel," << fmt_g17(rep.top1->novel) << '\n';
    f << "TOP1_OVERALL,all," << fmt_g17(rep.top1->overall) << '\n';
  }
}

std::string slurp(const std::string& path) {
  std::ifstream f;
  open_in(f, path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

}  // namespace ovd::io
