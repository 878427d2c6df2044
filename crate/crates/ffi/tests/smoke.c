#include <math.h>
#include <stdio.h>
#include <string.h>

#include "srl.h"

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond);  \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    SrlForm *bubble = NULL;
    CHECK(srl_form_catalog("bubble", &bubble) == SRL_STATUS_OK);
    CHECK(srl_form_dim(bubble) == 3);

    double origin[3] = {0.0, 0.0, 0.0};
    double c = 0.0;
    CHECK(srl_form_volume_coefficient(bubble, origin, 3, &c) == SRL_STATUS_OK);
    CHECK(fabs(c - 1.0) < 1e-12);

    double r[2];
    CHECK(srl_form_reeb(bubble, origin, 2, r) == SRL_STATUS_DIMENSION);
    CHECK(srl_last_error() != NULL && strlen(srl_last_error()) > 0);
    srl_form_free(bubble);

    SrlForm *none = NULL;
    CHECK(srl_form_catalog("nonsense", &none) == SRL_STATUS_CONFIG);
    CHECK(none == NULL);

    SrlConfig *cfg = srl_config_new();
    SrlReport *rep = NULL;
    CHECK(srl_run("foliation", cfg, &rep) == SRL_STATUS_OK);
    CHECK(srl_report_pass(rep));
    CHECK(srl_report_check_count(rep) > 0);
    SrlCheck chk;
    CHECK(srl_report_check(rep, 0, &chk) == SRL_STATUS_OK && chk.pass);
    CHECK(srl_report_check_name(rep, 0) != NULL);
    char *json = NULL;
    CHECK(srl_report_json(rep, &json) == SRL_STATUS_OK);
    CHECK(strstr(json, "\"schema_version\": 1") != NULL);
    srl_string_free(json);
    srl_report_free(rep);
    srl_config_free(cfg);

    printf("ok %s\n", srl_version());
    return 0;
}
