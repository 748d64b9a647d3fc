/* Generated stub patch.
 * path fingerprint: 24ee1c9a3ca40eed2604ed05879aaa17eb2edd99a4f7f806741048ac421e64d6
 * solver model:     82f95353ab2c11ff9f1e7a47f48106d1101868cadabfb52cf89bbe1f22a590a4
 */
#include <sys/types.h>

long ptrace(int request, pid_t pid, void *addr, void *data) {
    return 0x0;
}
