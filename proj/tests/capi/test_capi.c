/* Exercises the C interface from plain C: handles, error codes, and a tiny
 * generate -> train-model -> train-agent -> evaluate round trip. */
#include <clap/clap.h>

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                    \
  do {                                                                  \
    if (!(cond)) {                                                      \
      fprintf(stderr, "%s:%d: expected %s (%s)\n", __FILE__, __LINE__, \
              #cond, clap_last_error());                                \
      ++failures;                                                       \
    }                                                                   \
  } while (0)

static const char* tiny[] = {
    "model.deter_size=4",         "model.stoch_size=2",          "model.embed_size=3",
    "model.latent_action_size=2", "model.hidden_units=4",        "model.encoder_units=4",
    "model.decoder_units=4",      "model.action_encoder_units=4", "model.action_decoder_units=4",
    "model.action_prior_units=4", "model.head_units=4",          "model_train.steps=2",
    "model_train.batch_size=2",   "model_train.window=4",        "agent.policy_units=4",
    "agent.policy_layers=1",      "agent.value_units=4",         "agent.value_layers=1",
    "agent.batch_size=2",         "agent.window=3",              "agent_train.steps=2",
    "agent_train.eval_every=1",   "agent_train.eval_episodes=2", "agent_train.value_windows=2",
    "env.horizon=10",
};

static void tmp_path(char* buf, size_t cap, const char* name) {
  const char* dir = getenv("TMPDIR");
  snprintf(buf, cap, "%s/clap_capi_%s", dir && *dir ? dir : "/tmp", name);
}

int main(void) {
  clap_config* cfg = NULL;
  EXPECT(clap_config_new(&cfg) == CLAP_OK);
  EXPECT(strlen(clap_version()) > 0);

  /* Unknown keys fail with a usage error that lists the valid keys. */
  EXPECT(clap_config_set(cfg, "model.nonsense=1") == CLAP_ERR_USAGE);
  EXPECT(strstr(clap_last_error(), "model.deter_size") != NULL);
  EXPECT(clap_config_set(cfg, NULL) == CLAP_ERR_USAGE);

  for (size_t i = 0; i < sizeof tiny / sizeof tiny[0]; ++i) EXPECT(clap_config_set(cfg, tiny[i]) == CLAP_OK);
  char value[64];
  size_t needed = 0;
  EXPECT(clap_config_get(cfg, "model.deter_size", value, sizeof value, &needed) == CLAP_OK);
  EXPECT(strcmp(value, "4") == 0 && needed == 1);
  EXPECT(clap_config_get(cfg, "agent.epsilon", value, 2, &needed) == CLAP_OK);
  EXPECT(needed == 3 && strcmp(value, "2") == 0); /* truncated "2.0" */
  EXPECT(clap_config_snapshot(cfg, NULL, 0, &needed) == CLAP_OK && needed > 100);

  clap_dataset* data = NULL;
  EXPECT(clap_dataset_generate(cfg, "expert", 3, 5, &data) == CLAP_OK);
  EXPECT(clap_dataset_generate(cfg, "oracle", 3, 5, &data) == CLAP_ERR_USAGE);
  clap_dataset_info info;
  EXPECT(clap_dataset_info_get(data, &info) == CLAP_OK);
  EXPECT(info.episodes == 3 && info.steps == 30 && info.obs_dim == 8 && info.action_dim == 2);

  char path[512];
  tmp_path(path, sizeof path, "data.clapd");
  EXPECT(clap_dataset_save(data, path) == CLAP_OK);
  clap_dataset* reloaded = NULL;
  EXPECT(clap_dataset_load(path, &reloaded) == CLAP_OK);
  clap_dataset_info info2;
  EXPECT(clap_dataset_info_get(reloaded, &info2) == CLAP_OK);
  EXPECT(info2.mean_return == info.mean_return);
  clap_dataset_free(reloaded);
  EXPECT(clap_dataset_load("/nonexistent/data.clapd", &reloaded) == CLAP_ERR_DATA);

  double avg_return = 0, avg_max = 0;
  EXPECT(clap_dataset_reference_values(data, 1.0, &avg_return, &avg_max) == CLAP_OK);
  EXPECT(fabs(avg_return - info.mean_return) < 1e-9);

  double random_ref = 0, expert_ref = 0;
  EXPECT(clap_reference_returns(cfg, &random_ref, &expert_ref) == CLAP_OK);
  EXPECT(random_ref < expert_ref);

  clap_model* model = NULL;
  EXPECT(clap_model_new(cfg, data, 1, &model) == CLAP_OK);
  EXPECT(clap_model_train(model, data, NULL) == CLAP_OK);
  EXPECT(clap_model_step(model) == 2);
  EXPECT(clap_model_has_latent_actions(model) == 1);
  char model_path[512];
  tmp_path(model_path, sizeof model_path, "model.ckpt");
  EXPECT(clap_model_save(model, model_path) == CLAP_OK);
  clap_model* loaded = NULL;
  EXPECT(clap_model_load(model_path, &loaded) == CLAP_OK);
  EXPECT(clap_model_step(loaded) == 2);
  EXPECT(clap_model_load("/nonexistent/model.ckpt", &model) == CLAP_ERR_DATA);
  EXPECT(strstr(clap_last_error(), "/nonexistent/model.ckpt") != NULL);

  /* A variant that disagrees with the model is a usage error. */
  clap_agent* agent = NULL;
  EXPECT(clap_config_set(cfg, "agent.variant=no-latent-action") == CLAP_OK);
  EXPECT(clap_agent_new(cfg, loaded, 1, &agent) == CLAP_ERR_USAGE);
  EXPECT(clap_config_set(cfg, "agent.variant=constrained") == CLAP_OK);

  EXPECT(clap_agent_new(cfg, loaded, 1, &agent) == CLAP_OK);
  clap_curve_point last;
  EXPECT(clap_agent_train(agent, loaded, data, cfg, "c", NULL, NULL, &last) == CLAP_OK);
  EXPECT(last.step == 2 && clap_agent_step(agent) == 2);

  clap_evaluation ev;
  double returns[4];
  EXPECT(clap_evaluate(cfg, loaded, agent, 4, 9, &ev, returns) == CLAP_OK);
  EXPECT(isfinite(ev.mean_return) && isfinite(ev.normalized_return));
  double mean = (returns[0] + returns[1] + returns[2] + returns[3]) / 4.0;
  EXPECT(fabs(mean - ev.mean_return) < 1e-9);

  double v = 0;
  EXPECT(clap_mean_value(agent, loaded, data, 2, 3, &v) == CLAP_OK);
  EXPECT(isfinite(v));

  clap_action_summary summary;
  EXPECT(clap_action_study(loaded, data, 5, 1, 2, NULL, &summary) == CLAP_OK);
  EXPECT(summary.rows == 10 && summary.within_range >= 0.0 && summary.within_range <= 1.0);
  EXPECT(clap_action_study(loaded, data, 1000, 1, 2, NULL, &summary) == CLAP_ERR_DATA);

  EXPECT(clap_merge_csv("/nonexistent", "curve.csv", "/tmp/x.csv", NULL) == CLAP_ERR_DATA);

  clap_agent_free(agent);
  clap_model_free(loaded);
  clap_model_free(model);
  clap_dataset_free(data);
  clap_config_free(cfg);
  clap_config_free(NULL);

  if (failures == 0) printf("capi: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
