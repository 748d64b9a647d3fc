/* Generated stub patch.
 * path fingerprint: c50903a2d6726f31016aca5907ebfd1b1aff7d23dbef5ae12bc0651ad1ee6ec4
 * solver model:     10b794b1b10ee2a8399ca371355a3b93a14527e0b5a59dc560a7d31924b2dbcb
 */
#include <sys/types.h>

long ptrace(int request, pid_t pid, void *addr, void *data) {
    return 0x0;
}

int memcmp(const void *s1, const void *s2, size_t n) {
    return 0x0;
}
