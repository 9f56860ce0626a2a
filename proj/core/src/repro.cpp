namespace proxyq {}
