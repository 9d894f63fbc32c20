#include <math.h>
#include <stdio.h>
#include "blockhf.h"

int main(void) {
    size_t layers[] = {4, 2};
    BhfModel *model = NULL;
    if (bhf_model_autoencoder(layers, 2, &model) != BHF_STATUS_OK) {
        fprintf(stderr, "build: %s\n", bhf_last_error());
        return 1;
    }
    size_t n = bhf_model_param_count(model);
    double w[64], g[64], x[8] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    double loss = NAN;
    if (n > 64 || bhf_model_init_params(model, 1, w, n) != BHF_STATUS_OK ||
        bhf_model_loss(model, x, x, 2, w, n, &loss) != BHF_STATUS_OK ||
        bhf_model_grad(model, x, x, 2, w, n, g) != BHF_STATUS_OK) {
        fprintf(stderr, "eval: %s\n", bhf_last_error());
        return 1;
    }
    if (bhf_model_loss(model, NULL, x, 2, w, n, &loss) != BHF_STATUS_NULL_POINTER) {
        return 1;
    }
    bhf_model_free(model);
    printf("%zu %.17g\n", n, loss);
    return 0;
}
