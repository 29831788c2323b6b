#include <stdio.h>
#include <string.h>
#include "dualspace.h"

int main(int argc, char **argv) {
    if (argc < 2) return 64;
    DsEmbedding *emb = NULL;
    if (ds_embedding_load(argv[1], &emb) != DS_STATUS_OK) {
        fprintf(stderr, "load: %s\n", ds_last_error_message());
        return 1;
    }
    uint32_t ids[2];
    double scores[2];
    size_t count = 0;
    if (ds_nearest(emb, DS_COMPARE_METHOD_WW, "a", 2, ids, scores, &count) != DS_STATUS_OK) return 2;
    char tok[16];
    size_t len = 0;
    if (ds_embedding_token(emb, ids[0], tok, sizeof tok, &len) != DS_STATUS_OK) return 3;
    double sim = 0.0;
    if (ds_similarity(emb, DS_COMPARE_METHOD_WC, "a", "b", &sim) != DS_STATUS_OK) return 4;
    if (ds_embedding_token_id(emb, "missing", &ids[1]) != DS_STATUS_OUT_OF_VOCABULARY) return 5;
    printf("%s %zu %s %.3f %zu\n", ds_version(), ds_embedding_vocab_size(emb), tok, sim, count);
    ds_embedding_free(emb);
    return 0;
}
