/** Payload shapes of the /v1 service. The client renders these verbatim. */
export {};
